use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;
use std::thread;

use image::{Rgb, RgbImage};
use proctor_recognizer::{
    evaluate, split_dataset, train, Augmentation, Classifier, Recognizer, RecognizerError, Sample, SplitFractions,
    TrainConfig, TrainingSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solid_colors(per_class: usize) -> TrainingSet {
    let mut samples = Vec::new();
    for i in 0..per_class {
        samples.push(Sample {
            image: RgbImage::from_pixel(20, 24, Rgb([200, 30, 30])),
            label: 0,
        });
        samples.push(Sample {
            image: RgbImage::from_pixel(20 + (i % 3) as u32, 24, Rgb([30, 30, 200])),
            label: 1,
        });
    }
    TrainingSet {
        class_names: vec!["RED".into(), "BLUE".into()],
        samples,
    }
}

/// Four noisy texture classes (stripes both ways, checkerboard, rings)
/// that share a mean color and survive horizontal flips.
fn textures(per_class: usize, seed: u64) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for label in 0..4 {
        for _ in 0..per_class {
            let phase = rng.random_range(0..8u32);
            let (w, h) = (rng.random_range(28..40), rng.random_range(28..40));
            let mut img = RgbImage::new(w, h);
            for (x, y, p) in img.enumerate_pixels_mut() {
                let t = match label {
                    0 => x,
                    1 => y,
                    2 => x / 4 + y / 4,
                    _ => ((x as f32 - 16.0).hypot(y as f32 - 16.0) / 4.0) as u32,
                } + phase;
                let period = if label >= 2 { 1 } else { 4 };
                let v: u8 = if (t / period) % 2 == 0 { 190 } else { 60 };
                let n = rng.random_range(0..50u8);
                *p = Rgb([v.saturating_add(n), v.saturating_add(n), v.saturating_add(n)]);
            }
            samples.push(Sample { image: img, label });
        }
    }
    TrainingSet {
        class_names: (0..4).map(|i| format!("C{i}")).collect(),
        samples,
    }
}

fn quick(epochs: u32) -> TrainConfig {
    TrainConfig {
        epochs,
        input_side: 24,
        batch_size: 16,
        ..Default::default()
    }
}

fn image_hash(img: &RgbImage) -> u64 {
    let mut h = DefaultHasher::new();
    img.dimensions().hash(&mut h);
    img.as_raw().hash(&mut h);
    h.finish()
}

#[test]
fn separable_colors_reach_full_accuracy() {
    let set = solid_colors(20);
    let split = split_dataset(set.samples.len(), SplitFractions::default(), 1).unwrap();
    let (clf, history) = train(&set, &split, &quick(10)).unwrap();
    assert_eq!(history.len(), 10);
    assert_eq!(history.last().unwrap().val_accuracy, 1.0);
    assert_eq!(evaluate(&clf, &set, &split.test).unwrap(), 1.0);
    assert_eq!(clf.class_names(), ["RED", "BLUE"]);
}

#[test]
fn one_epoch_gives_one_history_entry() {
    let set = solid_colors(10);
    let split = split_dataset(set.samples.len(), SplitFractions::default(), 1).unwrap();
    let (_, history) = train(&set, &split, &quick(1)).unwrap();
    assert_eq!(history.len(), 1);
    assert_eq!(history[0].epoch, 1);
    assert!(history[0].train_loss.is_finite());
}

#[test]
fn learns_textures() {
    let set = textures(40, 5);
    let split = split_dataset(set.samples.len(), SplitFractions::default(), 2).unwrap();
    let (clf, history) = train(&set, &split, &quick(10)).unwrap();
    let first = &history[0];
    let last = history.last().unwrap();
    assert!(last.train_loss < first.train_loss, "{history:?}");
    assert!(last.val_accuracy >= 0.9, "{history:?}");
    assert!(evaluate(&clf, &set, &split.test).unwrap() >= 0.9);
}

#[test]
fn training_is_deterministic() {
    let set = textures(12, 9);
    let split = split_dataset(set.samples.len(), SplitFractions::default(), 3).unwrap();
    let (a, ha) = train(&set, &split, &quick(2)).unwrap();
    let (b, hb) = train(&set, &split, &quick(2)).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(a.manifest().model_sha256, b.manifest().model_sha256);
    let other = TrainConfig { seed: 1, ..quick(2) };
    let (c, _) = train(&set, &split, &other).unwrap();
    assert_ne!(a.manifest().model_sha256, c.manifest().model_sha256);
    assert_ne!(a.manifest().train_config_hash, c.manifest().train_config_hash);
}

#[test]
fn augmentation_leaves_held_out_samples_alone() {
    let set = textures(12, 4);
    let split = split_dataset(set.samples.len(), SplitFractions::default(), 3).unwrap();
    let held_out: Vec<u64> = split
        .val
        .iter()
        .chain(&split.test)
        .map(|&i| image_hash(&set.samples[i].image))
        .collect();
    let (clf, history) = train(&set, &split, &quick(2)).unwrap();
    let after: Vec<u64> = split
        .val
        .iter()
        .chain(&split.test)
        .map(|&i| image_hash(&set.samples[i].image))
        .collect();
    assert_eq!(held_out, after);
    // The reported validation accuracy is that of the untouched samples.
    assert_eq!(
        history.last().unwrap().val_accuracy,
        evaluate(&clf, &set, &split.val).unwrap()
    );
    let none = TrainConfig {
        augmentation: Augmentation::none(),
        ..quick(2)
    };
    let (plain, _) = train(&set, &split, &none).unwrap();
    assert_ne!(plain.manifest().model_sha256, clf.manifest().model_sha256);
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let set = textures(12, 1);
    let split = split_dataset(set.samples.len(), SplitFractions::default(), 0).unwrap();
    let (clf, _) = train(&set, &split, &quick(1)).unwrap();
    let path = dir.path().join("models/clf.model");
    let mpath = clf.save(&path).unwrap();
    assert_eq!(mpath, dir.path().join("models/clf.manifest.json"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mpath).unwrap()).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["class_names"][3], "C3");
    assert_eq!(manifest["input_side"], 24);

    let loaded = Classifier::load(&path).unwrap();
    assert_eq!(loaded.manifest(), clf.manifest());
    for s in set.samples.iter().take(10) {
        assert_eq!(loaded.predict(&s.image).unwrap(), clf.predict(&s.image).unwrap());
    }

    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(Classifier::load(&path), Err(RecognizerError::BadModel { .. })));
    assert!(matches!(
        Classifier::load(&dir.path().join("missing.model")),
        Err(RecognizerError::Io { .. })
    ));
}

#[test]
fn concurrent_predictions_agree() {
    let set = textures(10, 2);
    let split = split_dataset(set.samples.len(), SplitFractions::default(), 0).unwrap();
    let (clf, _) = train(&set, &split, &quick(1)).unwrap();
    let clf = Arc::new(clf);
    let imgs: Arc<Vec<RgbImage>> = Arc::new(set.samples.iter().map(|s| s.image.clone()).collect());
    let serial: Vec<_> = imgs.iter().map(|i| clf.predict(i).unwrap()).collect();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (clf, imgs) = (clf.clone(), imgs.clone());
            thread::spawn(move || imgs.iter().map(|i| clf.predict(i).unwrap()).collect::<Vec<_>>())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), serial);
    }
}

#[test]
fn bad_inputs() {
    let set = solid_colors(10);
    let split = split_dataset(set.samples.len(), SplitFractions::default(), 1).unwrap();
    let bad = TrainConfig {
        backbone: "resnet50".into(),
        ..quick(1)
    };
    assert!(matches!(
        train(&set, &split, &bad),
        Err(RecognizerError::InvalidConfig(_))
    ));
    let mut empty_val = split.clone();
    empty_val.val.clear();
    assert!(matches!(
        train(&set, &empty_val, &quick(1)),
        Err(RecognizerError::DatasetTooSmall(_))
    ));
    let mut mislabeled = set.clone();
    mislabeled.samples[0].label = 5;
    assert!(train(&mislabeled, &split, &quick(1)).is_err());
}
