//! Agreement with reference implementations. Fixtures were produced once
//! with TensorFlow Lite's reference kernels and OpenCV 4.10's
//! `CascadeClassifier` on the same inputs.

use std::path::Path;

use proctor_core::PixelRect;
use proctor_detect::{DetectorKind, DetectorSpec, FaceDetector};
use serde_json::Value;

fn fixture(name: &str) -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn image(name: &str) -> image::RgbImage {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    image::open(p).unwrap().to_rgb8()
}

fn iou(a: PixelRect, b: [f64; 4]) -> f64 {
    let b = (b[0], b[1], b[0] + b[2], b[1] + b[3]);
    let a = (a.x as f64, a.y as f64, a.right() as f64, a.bottom() as f64);
    let w = (a.2.min(b.2) - a.0.max(b.0)).max(0.0);
    let h = (a.3.min(b.3) - a.1.max(b.1)).max(0.0);
    let inter = w * h;
    inter / ((a.2 - a.0) * (a.3 - a.1) + (b.2 - b.0) * (b.3 - b.1) - inter)
}

#[test]
fn network_outputs_match_tflite_reference() {
    let fx = fixture("blazeface_raw.json");
    let det = FaceDetector::load(&DetectorSpec::bundled(DetectorKind::NeuralSsd)).unwrap();
    let input: Vec<f32> = (0..128 * 128 * 3)
        .map(|i: usize| ((i * 37 + 11) % 256) as f32 / 127.5 - 1.0)
        .collect();
    let (regs, logits) = det.network_outputs(&input).unwrap();
    assert_eq!(regs.len(), 896 * 16);
    assert_eq!(logits.len(), 896);

    let close = |got: f32, want: f64| (got as f64 - want).abs() <= 1e-3 * want.abs().max(1.0);
    let anchors = fx["anchors"].as_array().unwrap();
    for (k, a) in anchors.iter().enumerate() {
        let i = a.as_u64().unwrap() as usize;
        let want = fx["classificators"][k].as_f64().unwrap();
        assert!(close(logits[i], want), "logit {i}: {} vs {want}", logits[i]);
        for j in 0..4 {
            let want = fx["regressors"][k][j].as_f64().unwrap();
            assert!(
                close(regs[i * 16 + j], want),
                "reg {i}/{j}: {} vs {want}",
                regs[i * 16 + j]
            );
        }
    }
    let sum: f64 = logits.iter().map(|&v| v as f64).sum();
    let want = fx["cls_sum"].as_f64().unwrap();
    assert!((sum - want).abs() <= 1e-4 * want.abs(), "{sum} vs {want}");
    let abs: f64 = regs.iter().map(|&v| v.abs() as f64).sum();
    let want = fx["reg_abs_sum"].as_f64().unwrap();
    assert!((abs - want).abs() <= 1e-4 * want, "{abs} vs {want}");
}

#[test]
fn neural_boxes_match_reference_pipeline() {
    let fx = fixture("faces.json");
    let mut spec = DetectorSpec::bundled(DetectorKind::NeuralSsd);
    spec.input_side = 128;
    let det = FaceDetector::load(&spec).unwrap();
    for name in ["face0", "face4", "face7"] {
        let want = &fx[name];
        let dets = det.detect(&image(&format!("{name}.png"))).unwrap();
        assert_eq!(dets.len(), 1, "{name}: {dets:?}");
        let b: Vec<f64> = want["blaze_box"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let overlap = iou(dets[0].bbox, [b[0], b[1], b[2], b[3]]);
        assert!(overlap > 0.85, "{name}: IoU {overlap}");
        let score = want["blaze_score"].as_f64().unwrap();
        assert!(
            (dets[0].confidence as f64 - score).abs() < 0.05,
            "{name}: {}",
            dets[0].confidence
        );
    }
}

#[test]
fn haar_matches_opencv_detect_multiscale() {
    let fx = fixture("faces.json");
    let det = FaceDetector::load(&DetectorSpec::bundled(DetectorKind::HaarCascade)).unwrap();
    for name in ["face0", "face4", "face7"] {
        let want = fx[name]["haar"].as_array().unwrap();
        let dets = det.detect(&image(&format!("{name}.png"))).unwrap();
        assert_eq!(dets.len(), want.len(), "{name}: {dets:?} vs {want:?}");
        for (d, w) in dets.iter().zip(want) {
            let b: Vec<f64> = w.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
            let overlap = iou(d.bbox, [b[0], b[1], b[2], b[3]]);
            assert!(overlap > 0.8, "{name}: IoU {overlap} ({:?} vs {b:?})", d.bbox);
        }
    }
}
