use std::sync::OnceLock;

use image::RgbImage;
use proctor_core::{CellRef, Fps, PixelRect};
use proctor_detect::{DetectorKind, DetectorSpec, FaceDetector};
use proctor_ocr::{read_name, GlyphEngine, OcrConfig};
use proctor_synth::{
    generate_video, write_bundle, GroundTruth, ParticipantScript, Renderer, SessionScript, Span, SynthError,
};
use proctor_video::{open_video, Selection};

fn detector() -> &'static FaceDetector {
    static D: OnceLock<FaceDetector> = OnceLock::new();
    D.get_or_init(|| FaceDetector::load(&DetectorSpec::bundled(DetectorKind::NeuralSsd)).unwrap())
}

fn fps30() -> Fps {
    Fps::new(30.0).unwrap()
}

/// Smaller frames keep encoding cheap; 1280×720 gives 256×144 cells.
fn small(n: usize, duration_s: u64) -> SessionScript {
    SessionScript {
        width: 1280,
        height: 720,
        ..SessionScript::demo(n, duration_s, 3)
    }
}

fn crop(img: &RgbImage, r: PixelRect) -> RgbImage {
    image::imageops::crop_imm(img, r.x, r.y, r.w, r.h).to_image()
}

#[test]
fn sixty_seconds_at_30fps_is_1800_frames() {
    let dir = tempfile::tempdir().unwrap();
    let script = SessionScript {
        motion: false,
        ..small(10, 60)
    };
    let path = dir.path().join("v.mp4");
    let truth = generate_video(&script, &path).unwrap();
    assert_eq!(truth.frame_count, 1800);
    // no events and no motion: one segment with everyone visible
    assert_eq!(truth.segments.len(), 1);
    assert_eq!(truth.segments[0].cells.len(), 10);
    assert!(truth.segments[0]
        .cells
        .iter()
        .all(|c| c.face_visible && c.face_box.is_some()));
    let (meta, stream) = open_video(&path, fps30()).unwrap();
    assert_eq!((meta.frame_count, meta.duration_s), (1800, 60.0));
    assert_eq!(stream.count(), 1800);
}

#[test]
fn scripted_absence_blanks_exact_frames() {
    let dir = tempfile::tempdir().unwrap();
    let mut script = small(3, 70);
    script.participants[1].absences = vec![Span::new(30, 60)];
    let who = script.participants[1].name.clone();
    let truth = generate_video(&script, &dir.path().join("v.y4m")).unwrap();
    let faceless: Vec<u64> = (0..truth.frame_count)
        .filter(|&f| {
            let seg = truth.segment_at_frame(f).unwrap();
            seg.cells.iter().any(|c| c.participant == who && !c.face_visible)
        })
        .collect();
    assert_eq!(faceless, (900..1800).collect::<Vec<_>>());
    assert_eq!(truth.visible_seconds(&who), 40);
    // the label stays: the participant still occupies the cell
    assert_eq!(truth.cell_of(45, &who).unwrap().cell, CellRef::new(0, 1));
    assert!(truth.cell_of(45, &who).unwrap().face_box.is_none());
}

#[test]
fn leave_and_join_reflow_the_gallery() {
    let mut script = small(4, 12);
    script.participants[1].leave_s = Some(5);
    script.participants.push(ParticipantScript {
        join_s: 8,
        ..ParticipantScript::new("LATE COMER")
    });
    let r = Renderer::new(&script).unwrap();
    let (_, before) = r.frame_for_second(4);
    let (_, after) = r.frame_for_second(5);
    let (_, joined) = r.frame_for_second(8);
    let names = |c: &[proctor_synth::CellTruth]| {
        c.iter()
            .map(|c| (c.cell.col, c.participant.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(names(&before)[2], (2, "WONG KA YAN".to_string()));
    // LI MING left from col 1; everyone after moves one cell earlier
    assert_eq!(names(&after)[1], (1, "WONG KA YAN".to_string()));
    assert_eq!(names(&after)[2], (2, "ZHANG WEI".to_string()));
    assert_eq!(after.len(), 3);
    assert_eq!(names(&joined)[3], (3, "LATE COMER".to_string()));
}

#[test]
fn capacity_is_enforced() {
    let mut script = small(25, 5);
    script.participants.push(ParticipantScript::new("ONE TOO MANY"));
    assert!(matches!(
        script.validate(),
        Err(SynthError::CapacityExceeded {
            capacity: 25,
            wanted: 26
        })
    ));
}

#[test]
fn invalid_scripts_are_rejected() {
    let mut s = small(2, 20);
    s.participants[0].absences = vec![Span::new(10, 25)];
    assert!(matches!(s.validate(), Err(SynthError::InvalidScript(_))));
    let mut s = small(2, 20);
    s.participants[0].absences = vec![Span::new(2, 8), Span::new(5, 9)];
    assert!(s.validate().is_err());
    let mut s = small(2, 20);
    s.participants[1].name = "li ming".into();
    assert!(s.validate().is_err());
    let mut s = small(2, 20);
    s.participants[1].name = "A VERY LONG NAME INDEED".into();
    assert!(s.validate().is_err());
    let s = SessionScript {
        width: 1281,
        ..small(2, 20)
    };
    assert!(s.validate().is_err());
}

#[test]
fn faces_are_at_least_a_third_of_the_cell() {
    let script = SessionScript::demo(25, 2, 0);
    let r = Renderer::new(&script).unwrap();
    let (_, cells) = r.frame_for_second(1);
    for c in cells {
        let b = c.face_box.unwrap();
        let cell = r.cell_rect(c.cell);
        assert!(cell.contains_rect(&b));
        assert!(b.h * 3 >= cell.h, "{c:?}");
    }
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let script = small(5, 3);
    let a = generate_video(&script, &dir.path().join("a.mp4")).unwrap();
    let b = generate_video(&script, &dir.path().join("b.mp4")).unwrap();
    assert_eq!(a, b);
    let bytes = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(bytes("a.mp4"), bytes("b.mp4"));
    let other = generate_video(&SessionScript { seed: 4, ..script }, &dir.path().join("c.mp4")).unwrap();
    assert_ne!(a, other);
}

#[test]
fn bundle_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let script = small(3, 2);
    let bundle = write_bundle(&script, dir.path()).unwrap();
    assert_eq!(GroundTruth::load(&bundle.ground_truth).unwrap(), bundle.truth);
    let roster = proctor_core::Roster::load(&bundle.roster).unwrap();
    assert_eq!(
        roster.names().collect::<Vec<_>>(),
        ["CHAN TAI MAN", "LI MING", "WONG KA YAN"]
    );
    let back: SessionScript = serde_json::from_str(&std::fs::read_to_string(&bundle.script).unwrap()).unwrap();
    assert_eq!(back, script);
}

/// Full-size frames go through H.264 and back; every label must still read
/// and every face must still be found where the truth says it is.
#[test]
fn decoded_1080p_frames_match_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.mp4");
    let mut script = SessionScript::demo(25, 2, 11);
    script.participants[7].absences = vec![Span::new(1, 2)];
    let truth = generate_video(&script, &path).unwrap();
    let (_, stream) = open_video(&path, fps30()).unwrap();
    let cfg = OcrConfig::default();
    let engine = GlyphEngine::default();
    let frames: Vec<_> = stream.select(Selection::FirstOfSecond).map(|f| f.unwrap()).collect();
    assert_eq!(frames.len(), 2);
    let r = Renderer::new(&script).unwrap();
    for frame in &frames {
        let second = frame.index / 30;
        for c in &truth.segment_at(second).unwrap().cells {
            let cell = crop(&frame.image, r.cell_rect(c.cell));
            let reading = read_name(&cell, &cfg, &engine).unwrap();
            assert_eq!(
                reading.name.as_ref().map(|n| n.as_str()),
                Some(c.participant.as_str()),
                "{c:?} read {reading:?}"
            );
            let dets = detector().detect(&cell).unwrap();
            match c.face_box {
                Some(b) => {
                    assert_eq!(dets.len(), 1, "{c:?}: {dets:?}");
                    let local = PixelRect::new(b.x - r.cell_rect(c.cell).x, b.y - r.cell_rect(c.cell).y, b.w, b.h);
                    assert!(dets[0].bbox.iou(&local) >= 0.5, "{c:?}: {dets:?}");
                }
                None => assert!(dets.is_empty(), "{c:?}: {dets:?}"),
            }
        }
    }
}

#[test]
fn ninety_frame_clip_probes_as_three_seconds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clip.mp4");
    generate_video(&small(2, 3), &path).unwrap();
    let (meta, stream) = open_video(&path, fps30()).unwrap();
    assert_eq!((meta.frame_count, meta.duration_s, meta.fps.get()), (90, 3.0, 30.0));
    let idx: Vec<u64> = stream.sample_every(30).map(|f| f.unwrap().index).collect();
    assert_eq!(idx, [0, 30, 60]);
}
