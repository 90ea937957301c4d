use std::sync::OnceLock;

use image::{Rgb, RgbImage};
use proctor_core::PixelRect;
use proctor_detect::{
    crop_face, crop_rect, detect_faces, DetectError, Detection, DetectorKind, DetectorSpec, FaceDetector,
};
use proptest::prelude::*;

fn neural() -> &'static FaceDetector {
    static D: OnceLock<FaceDetector> = OnceLock::new();
    D.get_or_init(|| FaceDetector::load(&DetectorSpec::bundled(DetectorKind::NeuralSsd)).unwrap())
}

fn haar() -> &'static FaceDetector {
    static D: OnceLock<FaceDetector> = OnceLock::new();
    D.get_or_init(|| FaceDetector::load(&DetectorSpec::bundled(DetectorKind::HaarCascade)).unwrap())
}

fn face_fixture() -> RgbImage {
    let p = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/face0.png");
    image::open(p).unwrap().to_rgb8()
}

#[test]
fn blank_image_has_no_faces() {
    // Pinned before the build: the reference runtimes report 0 faces here.
    let gray = RgbImage::from_pixel(300, 300, Rgb([128, 128, 128]));
    for kind in [DetectorKind::NeuralSsd, DetectorKind::HaarCascade] {
        assert_eq!(detect_faces(&gray, &DetectorSpec::bundled(kind)).unwrap(), vec![]);
    }
}

#[test]
fn impossible_threshold_yields_nothing() {
    let img = face_fixture();
    for kind in [DetectorKind::NeuralSsd, DetectorKind::HaarCascade] {
        let mut spec = DetectorSpec::bundled(kind);
        spec.min_confidence = 1.01;
        assert!(detect_faces(&img, &spec).unwrap().is_empty());
    }
}

#[test]
fn contract_holds_for_both_kinds() {
    let img = face_fixture();
    for det in [neural(), haar()] {
        let found = det.detect_above(&img, 0.0).unwrap();
        assert!(!found.is_empty());
        for pair in found.windows(2) {
            assert!(pair[0].confidence >= pair[1].confidence);
        }
        for d in &found {
            assert!((0.0..=1.0).contains(&d.confidence));
            assert!(d.bbox.fits_within(img.width(), img.height()));
            assert!(!d.bbox.is_empty());
        }
    }
}

#[test]
fn load_errors() {
    let mut spec = DetectorSpec::bundled(DetectorKind::NeuralSsd);
    spec.model_artifact = "/nonexistent/model.tflite".into();
    assert!(matches!(FaceDetector::load(&spec), Err(DetectError::ModelLoad { .. })));

    // A cascade handed to the neural backend and vice versa.
    let mut spec = DetectorSpec::bundled(DetectorKind::NeuralSsd);
    spec.model_artifact = DetectorKind::HaarCascade.bundled_model();
    assert!(matches!(FaceDetector::load(&spec), Err(DetectError::ModelLoad { .. })));
    let mut spec = DetectorSpec::bundled(DetectorKind::HaarCascade);
    spec.model_artifact = DetectorKind::NeuralSsd.bundled_model();
    assert!(matches!(FaceDetector::load(&spec), Err(DetectError::ModelLoad { .. })));

    let mut spec = DetectorSpec::bundled(DetectorKind::NeuralSsd);
    spec.sha256 = Some("00".repeat(32));
    assert!(matches!(FaceDetector::load(&spec), Err(DetectError::ModelLoad { .. })));
    spec.sha256 = Some(proctor_detect::file_sha256(&spec.model_artifact).unwrap());
    assert!(FaceDetector::load(&spec).is_ok());

    let mut spec = DetectorSpec::bundled(DetectorKind::NeuralSsd);
    spec.input_side = 0;
    assert!(matches!(FaceDetector::load(&spec), Err(DetectError::InvalidSpec(_))));
}

#[test]
fn empty_image_is_rejected() {
    assert!(matches!(
        neural().detect(&RgbImage::new(0, 0)),
        Err(DetectError::EmptyImage)
    ));
}

#[test]
fn crop_examples() {
    let img = RgbImage::from_fn(100, 100, |x, y| Rgb([x as u8, y as u8, 0]));
    let det = |x, y, w, h| Detection {
        bbox: PixelRect::new(x, y, w, h),
        confidence: 0.9,
    };
    assert_eq!(
        crop_rect(PixelRect::new(10, 10, 20, 20), 0.0, 100, 100),
        PixelRect::new(10, 10, 20, 20)
    );
    let c = crop_face(&img, &det(10, 10, 20, 20), 0.0);
    assert_eq!(c.dimensions(), (20, 20));
    assert_eq!(c.get_pixel(0, 0), &Rgb([10, 10, 0]));

    let r = crop_rect(PixelRect::new(0, 0, 20, 20), 0.5, 100, 100);
    assert_eq!((r.x, r.y), (0, 0));
    assert_eq!((r.w, r.h), (30, 30));

    assert_eq!(
        crop_rect(PixelRect::new(10, 10, 20, 20), 0.25, 100, 100),
        PixelRect::new(5, 5, 30, 30)
    );
}

/// Shared-instance use from several threads gives identical answers.
#[test]
fn concurrent_inference_is_consistent() {
    let img = face_fixture();
    let base = neural().detect(&img).unwrap();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..4).map(|_| s.spawn(|| neural().detect(&img).unwrap())).collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), base);
        }
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn raising_the_threshold_never_adds_detections(
        lo in 0.0f32..1.0, delta in 0.0f32..0.5, seed in any::<u64>(), haar_kind in any::<bool>()
    ) {
        // Face fixture with a seeded noise patch so scores vary per case.
        let mut img = face_fixture();
        let mut s = seed | 1;
        for y in 0..40 {
            for x in 0..60 {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                img.put_pixel(x, y, Rgb([s as u8, (s >> 8) as u8, (s >> 16) as u8]));
            }
        }
        let det = if haar_kind { haar() } else { neural() };
        let a = det.detect_above(&img, lo).unwrap();
        let b = det.detect_above(&img, lo + delta).unwrap();
        prop_assert!(b.len() <= a.len());
        for d in a.iter().chain(&b) {
            prop_assert!(d.bbox.fits_within(img.width(), img.height()));
        }
    }

    #[test]
    fn crops_are_clipped_and_non_empty(
        x in 0u32..100, y in 0u32..80, w in 1u32..60, h in 1u32..60, m in 0.0f32..2.0
    ) {
        let (iw, ih) = (100, 80);
        let bbox = PixelRect::new(x, y, w.min(iw - x), h.min(ih - y));
        prop_assume!(!bbox.is_empty());
        let r = crop_rect(bbox, m, iw, ih);
        prop_assert!(!r.is_empty());
        prop_assert!(r.fits_within(iw, ih));
        prop_assert!(r.contains_rect(&bbox));
    }
}
