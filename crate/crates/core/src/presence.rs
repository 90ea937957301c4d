//! Windowed presence analytics.
//!
//! Per-second recognition events are folded into fixed windows of
//! `window_s` seconds. A student is present in a window when the number of
//! distinct seconds with an accepted recognition naming them is strictly
//! greater than `presence_min_count`. Absent windows are merged into
//! maximal intervals and summarized per student.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::error::Result;
use crate::grid::CellRef;
use crate::roster::{normalize_name, Roster};

/// Outcome of looking at one cell during one second of video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionEvent {
    pub second: u64,
    pub cell: CellRef,
    pub face_found: bool,
    /// Top-1 class when a face was found, accepted or not.
    pub class_name: Option<String>,
    /// Top-1 probability, 0 when no face was found.
    pub prob: f32,
    pub accepted: bool,
}

impl RecognitionEvent {
    pub fn no_face(second: u64, cell: CellRef) -> Self {
        Self {
            second,
            cell,
            face_found: false,
            class_name: None,
            prob: 0.0,
            accepted: false,
        }
    }

    pub fn recognized(second: u64, cell: CellRef, class_name: impl Into<String>, prob: f32, accepted: bool) -> Self {
        Self {
            second,
            cell,
            face_found: true,
            class_name: Some(class_name.into()),
            prob,
            accepted,
        }
    }

    /// The student credited by this event, if any.
    pub fn accepted_class(&self) -> Option<&str> {
        if self.accepted && self.face_found {
            self.class_name.as_deref()
        } else {
            None
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    second: u64,
    row: u32,
    col: u32,
    face_found: bool,
    class: String,
    prob: String,
    accepted: bool,
}

/// Write the event log as `second,row,col,face_found,class,prob,accepted`.
pub fn write_events_csv<W: Write>(events: &[RecognitionEvent], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in events {
        w.serialize(EventRow {
            second: e.second,
            row: e.cell.row,
            col: e.cell.col,
            face_found: e.face_found,
            class: e.class_name.clone().unwrap_or_default(),
            prob: format!("{:.6}", e.prob),
            accepted: e.accepted,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<RecognitionEvent>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: EventRow = row?;
        let prob = row
            .prob
            .parse::<f32>()
            .map_err(|e| crate::CoreError::InvalidConfig(format!("bad prob {:?}: {e}", row.prob)))?;
        out.push(RecognitionEvent {
            second: row.second,
            cell: CellRef::new(row.row, row.col),
            face_found: row.face_found,
            class_name: (!row.class.is_empty()).then_some(row.class),
            prob,
            accepted: row.accepted,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceWindow {
    pub student: String,
    pub window_idx: u64,
    pub start_s: u64,
    pub end_s: u64,
    /// Distinct seconds in the window with an accepted recognition.
    pub count: u32,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsenceInterval {
    pub student: String,
    pub start_s: u64,
    pub end_s: u64,
}

impl AbsenceInterval {
    pub fn len_s(&self) -> u64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentSummary {
    pub student: String,
    pub total_recognitions: u64,
    pub windows_present: u64,
    pub windows_absent: u64,
    pub longest_consecutive_absence_s: u64,
}

/// Number of windows needed to cover `total_seconds`.
pub fn window_count(total_seconds: u64, window_s: u32) -> u64 {
    total_seconds.div_ceil(window_s as u64)
}

/// Per-student presence verdicts for every window covering
/// `[0, total_seconds)`, grouped by student in roster order.
///
/// Events naming a class outside the roster are ignored. Several accepted
/// events for the same student within one second count once.
pub fn window_presence(
    events: &[RecognitionEvent],
    roster: &Roster,
    cfg: &AnalysisConfig,
    total_seconds: u64,
) -> Vec<PresenceWindow> {
    let w = cfg.window_s.max(1) as u64;
    let index: HashMap<String, usize> = roster
        .names()
        .enumerate()
        .map(|(i, n)| (normalize_name(n), i))
        .collect();

    let mut ordered: Vec<&RecognitionEvent> = events.iter().collect();
    ordered.sort_by_key(|e| (e.second, e.cell));

    let last_second = ordered.last().map_or(0, |e| e.second + 1);
    let n_windows = window_count(total_seconds.max(last_second), cfg.window_s);

    let n_students = roster.len();
    let mut counts = vec![vec![0u32; n_windows as usize]; n_students];
    let mut last_credited: Vec<Option<u64>> = vec![None; n_students];
    for e in ordered {
        let Some(name) = e.accepted_class() else {
            continue;
        };
        let Some(&s) = index.get(&normalize_name(name)) else {
            continue;
        };
        if last_credited[s] == Some(e.second) {
            continue;
        }
        last_credited[s] = Some(e.second);
        counts[s][(e.second / w) as usize] += 1;
    }

    let end_of_time = total_seconds.max(last_second);
    let mut out = Vec::with_capacity(n_students * n_windows as usize);
    for (s, name) in roster.names().enumerate() {
        for wi in 0..n_windows {
            let count = counts[s][wi as usize];
            out.push(PresenceWindow {
                student: name.to_string(),
                window_idx: wi,
                start_s: wi * w,
                end_s: ((wi + 1) * w).min(end_of_time),
                count,
                present: count > cfg.presence_min_count,
            });
        }
    }
    out
}

/// Merge maximal runs of absent windows into intervals, per student.
pub fn absence_intervals(windows: &[PresenceWindow]) -> Vec<AbsenceInterval> {
    let mut out: Vec<AbsenceInterval> = Vec::new();
    let mut prev: Option<&PresenceWindow> = None;
    for win in windows {
        if !win.present {
            let extends = matches!(
                (prev, out.last_mut()),
                (Some(p), Some(last))
                    if !p.present
                        && p.student == win.student
                        && p.window_idx + 1 == win.window_idx
                        && last.student == win.student
            );
            if extends {
                out.last_mut().expect("checked above").end_s = win.end_s;
            } else {
                out.push(AbsenceInterval {
                    student: win.student.clone(),
                    start_s: win.start_s,
                    end_s: win.end_s,
                });
            }
        }
        prev = Some(win);
    }
    out
}

/// Per-student counts and the longest run of consecutive absence.
pub fn consecutive_summary(windows: &[PresenceWindow]) -> Vec<StudentSummary> {
    let intervals = absence_intervals(windows);
    let mut order: Vec<&str> = Vec::new();
    let mut by_student: HashMap<&str, StudentSummary> = HashMap::new();
    for win in windows {
        let entry = by_student.entry(&win.student).or_insert_with(|| {
            order.push(&win.student);
            StudentSummary {
                student: win.student.clone(),
                total_recognitions: 0,
                windows_present: 0,
                windows_absent: 0,
                longest_consecutive_absence_s: 0,
            }
        });
        entry.total_recognitions += win.count as u64;
        if win.present {
            entry.windows_present += 1;
        } else {
            entry.windows_absent += 1;
        }
    }
    for iv in &intervals {
        if let Some(s) = by_student.get_mut(iv.student.as_str()) {
            s.longest_consecutive_absence_s = s.longest_consecutive_absence_s.max(iv.len_s());
        }
    }
    order
        .into_iter()
        .map(|name| by_student.remove(name).expect("inserted above"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roster::StudentRecord;

    fn roster(names: &[&str]) -> Roster {
        Roster::new(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| StudentRecord {
                    student_id: i.to_string(),
                    display_name: n.to_string(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn accepted(second: u64, name: &str) -> RecognitionEvent {
        RecognitionEvent::recognized(second, CellRef::new(0, 0), name, 0.9, true)
    }

    fn windows_for(flags: &[bool], student: &str) -> Vec<PresenceWindow> {
        flags
            .iter()
            .enumerate()
            .map(|(i, &present)| PresenceWindow {
                student: student.into(),
                window_idx: i as u64,
                start_s: i as u64 * 30,
                end_s: (i as u64 + 1) * 30,
                count: if present { 20 } else { 0 },
                present,
            })
            .collect()
    }

    #[test]
    fn strictly_more_than_ten() {
        let r = roster(&["A"]);
        let cfg = AnalysisConfig::default();
        let twelve: Vec<_> = (0..12).map(|s| accepted(s, "A")).collect();
        let w = window_presence(&twelve, &r, &cfg, 30);
        assert_eq!(w.len(), 1);
        assert!(w[0].present);

        let ten: Vec<_> = (0..10).map(|s| accepted(s, "A")).collect();
        let w = window_presence(&ten, &r, &cfg, 30);
        assert_eq!(w[0].count, 10);
        assert!(!w[0].present);

        let eleven: Vec<_> = (0..11).map(|s| accepted(s, "A")).collect();
        assert!(window_presence(&eleven, &r, &cfg, 30)[0].present);
    }

    #[test]
    fn no_events_means_everyone_absent() {
        let r = roster(&["A", "B"]);
        let w = window_presence(&[], &r, &AnalysisConfig::default(), 95);
        assert_eq!(w.len(), 8);
        assert!(w.iter().all(|w| !w.present));
        assert_eq!(w[3].end_s, 95);
    }

    #[test]
    fn rejected_and_faceless_events_do_not_count() {
        let r = roster(&["A"]);
        let mut ev: Vec<_> = (0..20)
            .map(|s| RecognitionEvent::recognized(s, CellRef::new(0, 0), "A", 0.3, false))
            .collect();
        ev.extend((20..30).map(|s| RecognitionEvent::no_face(s, CellRef::new(0, 0))));
        let w = window_presence(&ev, &r, &AnalysisConfig::default(), 30);
        assert_eq!(w[0].count, 0);
    }

    #[test]
    fn duplicate_second_counts_once() {
        let r = roster(&["A"]);
        let mut ev = Vec::new();
        for s in 0..6 {
            ev.push(accepted(s, "A"));
            ev.push(RecognitionEvent::recognized(s, CellRef::new(1, 1), "A", 0.8, true));
        }
        assert_eq!(window_presence(&ev, &r, &AnalysisConfig::default(), 30)[0].count, 6);
    }

    #[test]
    fn run_merge() {
        let w = windows_for(&[true, true, false, false, false, true], "A");
        let iv = absence_intervals(&w);
        assert_eq!(
            iv,
            vec![AbsenceInterval {
                student: "A".into(),
                start_s: 60,
                end_s: 150
            }]
        );
        assert!(absence_intervals(&windows_for(&[true; 4], "A")).is_empty());
    }

    #[test]
    fn alternating_windows() {
        let w = windows_for(&[true, false, true, false], "A");
        let iv = absence_intervals(&w);
        assert_eq!(iv.len(), 2);
        assert!(iv.iter().all(|i| i.len_s() == 30));
        assert_eq!((iv[0].start_s, iv[1].start_s), (30, 90));
    }

    #[test]
    fn runs_do_not_cross_students() {
        let mut w = windows_for(&[true, false], "A");
        w.extend(windows_for(&[false, true], "B"));
        let iv = absence_intervals(&w);
        assert_eq!(iv.len(), 2);
        assert_eq!(iv[1].student, "B");
        assert_eq!((iv[1].start_s, iv[1].end_s), (0, 30));
    }

    #[test]
    fn longest_run() {
        let s = consecutive_summary(&windows_for(&[true, false, true, false, false, false], "A"));
        assert_eq!(s[0].longest_consecutive_absence_s, 90);
        assert_eq!(s[0].windows_absent, 4);
        let s = consecutive_summary(&windows_for(&[true; 6], "A"));
        assert_eq!(s[0].longest_consecutive_absence_s, 0);
        let s = consecutive_summary(&windows_for(&[false; 6], "A"));
        assert_eq!(s[0].longest_consecutive_absence_s, 180);
        assert_eq!(s[0].windows_present + s[0].windows_absent, 6);
    }

    #[test]
    fn csv_round_trip() {
        let ev = vec![
            RecognitionEvent::no_face(0, CellRef::new(0, 1)),
            RecognitionEvent::recognized(1, CellRef::new(2, 3), "CHAN TAI MAN", 0.875, true),
        ];
        let mut buf = Vec::new();
        write_events_csv(&ev, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("second,row,col,face_found,class,prob,accepted\n"));
        assert_eq!(read_events_csv(buf.as_slice()).unwrap(), ev);
    }
}
