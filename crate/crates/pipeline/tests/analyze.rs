use std::path::PathBuf;
use std::sync::OnceLock;

use image::RgbImage;
use proctor_core::{AnalysisConfig, GridLayout};
use proctor_detect::{DetectorKind, DetectorSpec, FaceDetector};
use proctor_pipeline::{analyze_video, AnalysisMode, AnalyzeOptions};
use proctor_recognizer::{Counting, StubRecognizer};
use proctor_synth::{generate_video, GroundTruth, SessionScript, Span};

fn detector() -> &'static FaceDetector {
    static D: OnceLock<FaceDetector> = OnceLock::new();
    D.get_or_init(|| FaceDetector::load(&DetectorSpec::bundled(DetectorKind::NeuralSsd)).unwrap())
}

struct Clip {
    _dir: tempfile::TempDir,
    path: PathBuf,
    truth: GroundTruth,
}

/// 8 s on a 3×3 gallery: four students, one away for [2, 5), one cell
/// never occupied.
fn clip() -> &'static Clip {
    static C: OnceLock<Clip> = OnceLock::new();
    C.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut script = SessionScript::demo(4, 8, 5);
        (script.rows, script.cols, script.width, script.height) = (3, 3, 1152, 648);
        script.participants[1].absences = vec![Span::new(2, 5)];
        let path = dir.path().join("exam.mp4");
        let truth = generate_video(&script, &path).unwrap();
        Clip { _dir: dir, path, truth }
    })
}

fn cfg() -> AnalysisConfig {
    AnalysisConfig {
        rows: 3,
        cols: 3,
        ..Default::default()
    }
}

/// Scores depend only on the crop's mean colour.
fn stub() -> Counting<StubRecognizer> {
    let names: Vec<String> = (0..4).map(|i| format!("CLASS {i}")).collect();
    Counting::new(StubRecognizer::from_fn(names, |img: &RgbImage| {
        let n = (img.width() * img.height()).max(1) as u64;
        let red: u64 = img.pixels().map(|p| p.0[0] as u64).sum::<u64>() / n;
        let mut logits = vec![0.0; 4];
        logits[(red / 64) as usize % 4] = 4.0;
        logits
    }))
}

fn opts(mode: AnalysisMode, workers: usize) -> AnalyzeOptions {
    AnalyzeOptions {
        mode,
        worker_count: workers,
        ..Default::default()
    }
}

#[test]
fn one_recognizer_call_per_second_and_face_cell() {
    let c = clip();
    let rec = stub();
    let a = analyze_video(&c.path, &rec, detector(), &cfg(), &opts(AnalysisMode::PerSecond, 2)).unwrap();
    let face_seconds: u64 = c.truth.participants.iter().map(|p| c.truth.visible_seconds(p)).sum();
    assert_eq!(face_seconds, 4 * 8 - 3);
    assert_eq!(a.stats.face_cells, face_seconds);
    assert_eq!(rec.calls(), face_seconds);
    assert_eq!(a.stats.recognizer_calls, rec.calls());
    assert!(rec.calls() <= a.stats.total_seconds * 9);
    assert_eq!(
        (a.stats.total_seconds, a.stats.seconds_analyzed, a.stats.frames_examined),
        (8, 8, 8)
    );
}

#[test]
fn events_follow_the_ground_truth_in_second_cell_order() {
    let c = clip();
    let a = analyze_video(&c.path, &stub(), detector(), &cfg(), &opts(AnalysisMode::PerSecond, 3)).unwrap();
    let grid = GridLayout::new(3, 3, 1152, 648).unwrap();
    assert_eq!(a.events.len(), 8 * 9);
    for (i, e) in a.events.iter().enumerate() {
        assert_eq!(e.second, i as u64 / 9);
        assert_eq!(grid.linear_index(e.cell).unwrap(), i % 9);
        let visible = c.truth.cell_at(e.second, e.cell).is_some_and(|t| t.face_visible);
        assert_eq!(e.face_found, visible, "second {} cell {:?}", e.second, e.cell);
        assert_eq!(e.class_name.is_some(), e.face_found);
    }
    // the last cell never holds anyone
    assert!(a
        .events
        .iter()
        .filter(|e| grid.linear_index(e.cell).unwrap() == 8)
        .all(|e| !e.face_found));
}

#[test]
fn per_frame_mode_costs_about_thirty_times_more() {
    let c = clip();
    let (ps, pf) = (stub(), stub());
    let a = analyze_video(&c.path, &ps, detector(), &cfg(), &opts(AnalysisMode::PerSecond, 2)).unwrap();
    let b = analyze_video(&c.path, &pf, detector(), &cfg(), &opts(AnalysisMode::PerFrame, 2)).unwrap();
    let ratio = pf.calls() as f64 / ps.calls() as f64;
    assert!((ratio - 30.0).abs() <= 1.5, "ratio {ratio}");
    assert_eq!(b.stats.frames_examined, 240);
    assert_eq!(a.events, b.events);
}

#[test]
fn worker_count_does_not_change_events() {
    let c = clip();
    let one = analyze_video(&c.path, &stub(), detector(), &cfg(), &opts(AnalysisMode::PerSecond, 1)).unwrap();
    let five = analyze_video(&c.path, &stub(), detector(), &cfg(), &opts(AnalysisMode::PerSecond, 5)).unwrap();
    assert_eq!(one.events, five.events);
    assert_eq!(one.stats, five.stats);
}

#[test]
fn grid_mismatch_is_rejected() {
    let c = clip();
    let bad = AnalysisConfig { rows: 0, ..cfg() };
    let err = analyze_video(&c.path, &stub(), detector(), &bad, &AnalyzeOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let missing = analyze_video(
        &c.path.with_extension("none.mp4"),
        &stub(),
        detector(),
        &cfg(),
        &AnalyzeOptions::default(),
    )
    .unwrap_err();
    assert_eq!(missing.exit_code(), 3);
}
