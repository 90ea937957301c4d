//! Report bundle: `summary.json`, `timeline.csv` and three SVG charts.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use proctor_core::{
    absence_intervals, consecutive_summary, window_count, window_presence, write_events_csv, AbsenceInterval,
    AnalysisConfig, PresenceWindow, RecognitionEvent, Roster,
};
use serde::{Deserialize, Serialize};

use crate::{PipelineError, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMELINE_FILE: &str = "timeline.csv";
pub const CHART_RECOGNITIONS: &str = "recognition_frequency.svg";
pub const CHART_PRESENCE: &str = "present_frequency.svg";
pub const CHART_ABSENCES: &str = "consecutive_absence.svg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start_s: u64,
    pub end_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentReport {
    pub student_id: String,
    pub name: String,
    /// Seconds with an accepted recognition of this student.
    pub total_recognitions: u64,
    pub windows_present: u64,
    pub windows_absent: u64,
    pub longest_consecutive_absence_s: u64,
    /// Accepted-second count per window.
    pub window_counts: Vec<u32>,
    pub absences: Vec<Span>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventTotals {
    pub events: u64,
    pub no_face: u64,
    /// Face found but the prediction was below the acceptance threshold.
    pub rejected: u64,
    pub accepted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub duration_s: u64,
    pub window_s: u32,
    pub presence_min_count: u32,
    pub accept_threshold: f64,
    pub window_count: u64,
    /// The last window is shorter than `window_s` but uses the same rule.
    pub final_window_partial: bool,
    pub totals: EventTotals,
    pub students: Vec<StudentReport>,
    /// Run manifest of the producing command, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

/// Windows, intervals and per-student numbers derived from events.
#[derive(Debug, Clone)]
pub struct Findings {
    pub windows: Vec<PresenceWindow>,
    pub absences: Vec<AbsenceInterval>,
    pub summary: Summary,
}

pub fn summarize(events: &[RecognitionEvent], roster: &Roster, cfg: &AnalysisConfig, duration_s: u64) -> Findings {
    let windows = window_presence(events, roster, cfg, duration_s);
    let absences = absence_intervals(&windows);
    let summaries = consecutive_summary(&windows);
    let students = roster
        .records()
        .iter()
        .map(|r| {
            let s = summaries.iter().find(|s| s.student == r.display_name);
            StudentReport {
                student_id: r.student_id.clone(),
                name: r.display_name.clone(),
                total_recognitions: s.map_or(0, |s| s.total_recognitions),
                windows_present: s.map_or(0, |s| s.windows_present),
                windows_absent: s.map_or(0, |s| s.windows_absent),
                longest_consecutive_absence_s: s.map_or(0, |s| s.longest_consecutive_absence_s),
                window_counts: windows
                    .iter()
                    .filter(|w| w.student == r.display_name)
                    .map(|w| w.count)
                    .collect(),
                absences: absences
                    .iter()
                    .filter(|a| a.student == r.display_name)
                    .map(|a| Span {
                        start_s: a.start_s,
                        end_s: a.end_s,
                    })
                    .collect(),
            }
        })
        .collect();
    let mut totals = EventTotals::default();
    for e in events {
        totals.events += 1;
        match (e.face_found, e.accepted) {
            (false, _) => totals.no_face += 1,
            (true, false) => totals.rejected += 1,
            (true, true) => totals.accepted += 1,
        }
    }
    let summary = Summary {
        schema_version: REPORT_SCHEMA_VERSION,
        duration_s,
        window_s: cfg.window_s,
        presence_min_count: cfg.presence_min_count,
        accept_threshold: cfg.accept_threshold,
        window_count: window_count(duration_s, cfg.window_s),
        final_window_partial: duration_s % cfg.window_s as u64 != 0,
        totals,
        students,
        run: None,
    };
    Findings {
        windows,
        absences,
        summary,
    }
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub summary: PathBuf,
    pub timeline: PathBuf,
    pub charts: Vec<PathBuf>,
}

fn chart_err(path: &Path) -> impl Fn(String) -> PipelineError + '_ {
    move |e| PipelineError::Backend(format!("chart {}: {e}", path.display()))
}

fn bar_chart(path: &Path, title: &str, y_label: &str, bars: &[(String, f64)], y_max: f64) -> Result<()> {
    let err = chart_err(path);
    let width = (160 + 70 * bars.len() as u32).max(640);
    let root = SVGBackend::new(path, (width, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let n = bars.len().max(1) as i32;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(90)
        .y_label_area_size(60)
        .build_cartesian_2d(0..n, 0.0..y_max.max(1.0) * 1.05)
        .map_err(|e| err(e.to_string()))?;
    let labels: Vec<String> = bars.iter().map(|(l, _)| l.clone()).collect();
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(bars.len().max(1))
        .x_label_formatter(&|i| labels.get(*i as usize).cloned().unwrap_or_default())
        .x_label_style(("sans-serif", 12).into_font().transform(FontTransform::Rotate90))
        .y_desc(y_label)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    chart
        .draw_series(bars.iter().enumerate().map(|(i, (_, v))| {
            let i = i as i32;
            let mut r = Rectangle::new([(i, 0.0), (i + 1, *v)], BLUE.mix(0.7).filled());
            r.set_margin(0, 0, 8, 8);
            r
        }))
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))?;
    Ok(())
}

fn absence_chart(path: &Path, summary: &Summary) -> Result<()> {
    let err = chart_err(path);
    let n = summary.students.len().max(1) as i32;
    let root = SVGBackend::new(path, (900, (120 + 28 * n as u32).max(300))).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let names: Vec<String> = summary.students.iter().map(|s| s.name.clone()).collect();
    let mut chart = ChartBuilder::on(&root)
        .caption("Consecutive absence", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(130)
        .build_cartesian_2d(0..summary.duration_s.max(1), 0..n)
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .disable_y_mesh()
        .y_labels(n as usize)
        .y_label_formatter(&|i| names.get(*i as usize).cloned().unwrap_or_default())
        .x_desc("exam time (s)")
        .draw()
        .map_err(|e| err(e.to_string()))?;
    for (row, s) in summary.students.iter().enumerate() {
        let row = row as i32;
        chart
            .draw_series(s.absences.iter().map(|a| {
                let mut r = Rectangle::new([(a.start_s, row), (a.end_s, row + 1)], RED.mix(0.7).filled());
                r.set_margin(4, 4, 0, 0);
                r
            }))
            .map_err(|e| err(e.to_string()))?;
    }
    root.present().map_err(|e| err(e.to_string()))?;
    Ok(())
}

/// Write the report into `out_dir` (created if needed). `run` is embedded
/// in `summary.json` as the producing run's manifest.
pub fn render_report(
    events: &[RecognitionEvent],
    roster: &Roster,
    cfg: &AnalysisConfig,
    duration_s: u64,
    run: Option<serde_json::Value>,
    out_dir: &Path,
) -> Result<ReportBundle> {
    fs::create_dir_all(out_dir).map_err(PipelineError::io(out_dir))?;
    let mut findings = summarize(events, roster, cfg, duration_s);
    findings.summary.run = run;
    let summary = &findings.summary;

    let timeline = out_dir.join(TIMELINE_FILE);
    let file = fs::File::create(&timeline).map_err(PipelineError::io(&timeline))?;
    write_events_csv(events, std::io::BufWriter::new(file))?;

    let summary_path = out_dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(&summary_path, json + "\n").map_err(PipelineError::io(&summary_path))?;

    let charts = vec![
        out_dir.join(CHART_RECOGNITIONS),
        out_dir.join(CHART_PRESENCE),
        out_dir.join(CHART_ABSENCES),
    ];
    let recog: Vec<(String, f64)> = summary
        .students
        .iter()
        .map(|s| (s.name.clone(), s.total_recognitions as f64))
        .collect();
    bar_chart(
        &charts[0],
        "Recognition frequency",
        "accepted seconds",
        &recog,
        duration_s as f64,
    )?;
    let present: Vec<(String, f64)> = summary
        .students
        .iter()
        .map(|s| (s.name.clone(), s.windows_present as f64))
        .collect();
    bar_chart(
        &charts[1],
        "Present frequency",
        "present windows",
        &present,
        summary.window_count as f64,
    )?;
    absence_chart(&charts[2], summary)?;
    Ok(ReportBundle {
        summary: summary_path,
        timeline,
        charts,
    })
}
