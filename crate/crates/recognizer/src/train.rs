use std::collections::HashSet;
use std::f64::consts::PI;
use std::thread;

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use imageproc::geometric_transformations::{rotate_about_center, Interpolation};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Classifier;
use crate::net::Network;
use crate::split::DatasetSplit;
use crate::{softmax, Recognizer, RecognizerError, Result};

pub const BACKBONES: &[&str] = &["small-resnet"];

/// Work is cut into this many pieces per batch regardless of core count,
/// so gradient sums (and hence trained weights) do not depend on the
/// machine.
const PAR_CHUNKS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Augmentation {
    /// Horizontal flip with probability 0.5.
    pub random_flip: bool,
    /// Uniform rotation in ±degrees; 0 disables.
    pub rotation_deg: f32,
    /// Side fraction of the random crop that is resized back; 1 disables.
    pub crop_frac: f32,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self {
            random_flip: true,
            rotation_deg: 10.0,
            crop_frac: 0.875,
        }
    }
}

impl Augmentation {
    pub fn none() -> Self {
        Self {
            random_flip: false,
            rotation_deg: 0.0,
            crop_frac: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: u32,
    /// Peak Adam step size; decays to 0 along a cosine over all steps.
    pub learning_rate: f32,
    pub seed: u64,
    /// Side of the square network input; crops are resized to it.
    pub input_side: u32,
    pub backbone: String,
    pub augmentation: Augmentation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 2e-3,
            seed: 0,
            input_side: 48,
            backbone: BACKBONES[0].to_string(),
            augmentation: Augmentation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RecognizerError::InvalidConfig(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(16..=256).contains(&self.input_side) {
            return bad(format!("input_side must be within 16..=256, got {}", self.input_side));
        }
        if !BACKBONES.contains(&self.backbone.as_str()) {
            return bad(format!(
                "unknown backbone {:?}; available: {}",
                self.backbone,
                BACKBONES.join(", ")
            ));
        }
        let a = &self.augmentation;
        if !(0.0..180.0).contains(&a.rotation_deg) {
            return bad(format!("rotation_deg must be within [0,180), got {}", a.rotation_deg));
        }
        if !(a.crop_frac > 0.0 && a.crop_frac <= 1.0) {
            return bad(format!("crop_frac must be within (0,1], got {}", a.crop_frac));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: RgbImage,
    /// Index into [`TrainingSet::class_names`].
    pub label: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub class_names: Vec<String>,
    pub samples: Vec<Sample>,
}

impl TrainingSet {
    pub fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() {
            return Err(RecognizerError::DatasetTooSmall("no classes".into()));
        }
        let unique: HashSet<&String> = self.class_names.iter().collect();
        if unique.len() != self.class_names.len() {
            return Err(RecognizerError::InvalidConfig("duplicate class names".into()));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.label >= self.class_names.len() {
                return Err(RecognizerError::InvalidConfig(format!(
                    "sample {i} has label {}",
                    s.label
                )));
            }
            if s.image.width() == 0 || s.image.height() == 0 {
                return Err(RecognizerError::EmptyImage);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: u32,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// Resize to the network's square input.
pub fn prepare_image(img: &RgbImage, side: u32) -> RgbImage {
    if img.dimensions() == (side, side) {
        img.clone()
    } else {
        imageops::resize(img, side, side, FilterType::Triangle)
    }
}

/// One random training view of an already prepared image.
pub fn augment<R: Rng>(img: &RgbImage, aug: &Augmentation, rng: &mut R) -> RgbImage {
    let mut out = img.clone();
    if aug.random_flip && rng.random_bool(0.5) {
        imageops::flip_horizontal_in_place(&mut out);
    }
    if aug.rotation_deg > 0.0 {
        let deg = rng.random_range(-aug.rotation_deg..=aug.rotation_deg);
        out = rotate_about_center(&out, deg.to_radians(), Interpolation::Bilinear, Rgb([0, 0, 0]));
    }
    if aug.crop_frac < 1.0 {
        let (w, h) = out.dimensions();
        let cw = ((w as f32 * aug.crop_frac).round() as u32).clamp(1, w);
        let ch = ((h as f32 * aug.crop_frac).round() as u32).clamp(1, h);
        let x = rng.random_range(0..=w - cw);
        let y = rng.random_range(0..=h - ch);
        let crop = imageops::crop_imm(&out, x, y, cw, ch).to_image();
        out = imageops::resize(&crop, w, h, FilterType::Triangle);
    }
    out
}

pub(crate) fn to_tensor(img: &RgbImage, mean: &[f32; 3], std: &[f32; 3]) -> Vec<f32> {
    let n = (img.width() * img.height()) as usize;
    let mut x = vec![0.0f32; 3 * n];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            x[c * n + i] = (p[c] as f32 / 255.0 - mean[c]) / std[c];
        }
    }
    x
}

fn channel_stats(images: &[RgbImage]) -> ([f32; 3], [f32; 3]) {
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut n = 0.0f64;
    for img in images {
        for p in img.pixels() {
            for c in 0..3 {
                let v = p[c] as f64 / 255.0;
                sum[c] += v;
                sq[c] += v * v;
            }
            n += 1.0;
        }
    }
    let mut mean = [0.0f32; 3];
    let mut std = [1.0f32; 3];
    for c in 0..3 {
        let m = sum[c] / n.max(1.0);
        mean[c] = m as f32;
        std[c] = ((sq[c] / n.max(1.0) - m * m).max(0.0).sqrt() as f32).max(1e-3);
    }
    (mean, std)
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f32], grad: &[f32], lr: f32) {
        let (b1, b2, eps) = (0.9f32, 0.999f32, 1e-8f32);
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
        }
    }
}

/// Summed gradient, summed loss and correct count over one batch.
fn batch_gradient(net: &Network, params: &[f32], xs: &[Vec<f32>], labels: &[usize]) -> (Vec<f32>, f64, usize) {
    let chunk = xs.len().div_ceil(PAR_CHUNKS).max(1);
    let parts: Vec<(Vec<f32>, f64, usize)> = thread::scope(|s| {
        let handles: Vec<_> = xs
            .chunks(chunk)
            .zip(labels.chunks(chunk))
            .map(|(xs, ys)| {
                s.spawn(move || {
                    let mut g = vec![0.0f32; net.param_len()];
                    let (mut loss, mut correct) = (0.0f64, 0usize);
                    for (x, &y) in xs.iter().zip(ys) {
                        let (z, tape) = net.forward_recorded(params, x);
                        let p = softmax(&z);
                        loss -= p[y].max(1e-12).ln();
                        let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
                        correct += usize::from(best == y);
                        let mut dz: Vec<f32> = p.iter().map(|&v| v as f32).collect();
                        dz[y] -= 1.0;
                        net.backward(params, &tape, &dz, &mut g);
                    }
                    (g, loss, correct)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("gradient worker panicked"))
            .collect()
    });
    let mut total = vec![0.0f32; net.param_len()];
    let (mut loss, mut correct) = (0.0, 0);
    for (g, l, c) in parts {
        for (t, v) in total.iter_mut().zip(&g) {
            *t += v;
        }
        loss += l;
        correct += c;
    }
    (total, loss, correct)
}

/// Top-1 accuracy of `rec` on the given samples (no acceptance threshold).
/// Classes are matched by name, so `rec` may order them differently.
pub fn evaluate(rec: &dyn Recognizer, set: &TrainingSet, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let chunk = indices.len().div_ceil(PAR_CHUNKS).max(1);
    let counts: Vec<Result<usize>> = thread::scope(|s| {
        let handles: Vec<_> = indices
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    let mut ok = 0;
                    for &i in part {
                        let sample = &set.samples[i];
                        let pred = rec.predict(&sample.image)?;
                        ok += usize::from(pred.argmax_class == set.class_names[sample.label]);
                    }
                    Ok(ok)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut correct = 0;
    for c in counts {
        correct += c?;
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Fit a classifier on `split.train`, reporting validation accuracy after
/// every epoch. Deterministic for a fixed config and seed. Augmentation
/// touches only the training part; validation and test samples are read
/// as stored.
pub fn train(set: &TrainingSet, split: &DatasetSplit, cfg: &TrainConfig) -> Result<(Classifier, Vec<EpochStats>)> {
    cfg.validate()?;
    set.validate()?;
    let n = set.samples.len();
    if let Some(&bad) = split
        .train
        .iter()
        .chain(&split.val)
        .chain(&split.test)
        .find(|&&i| i >= n)
    {
        return Err(RecognizerError::InvalidConfig(format!(
            "split index {bad} out of range for {n} samples"
        )));
    }
    if split.train.is_empty() || split.val.is_empty() {
        return Err(RecognizerError::DatasetTooSmall(format!(
            "{} training and {} validation samples",
            split.train.len(),
            split.val.len()
        )));
    }

    let side = cfg.input_side;
    let base: Vec<RgbImage> = split
        .train
        .iter()
        .map(|&i| prepare_image(&set.samples[i].image, side))
        .collect();
    let labels: Vec<usize> = split.train.iter().map(|&i| set.samples[i].label).collect();
    let (mean, std) = channel_stats(&base);

    let net = Network::small_resnet(side as usize, set.class_names.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = net.init(&mut rng);
    let mut adam = Adam::new(params.len());

    let bs = cfg.batch_size as usize;
    let total_steps = (cfg.epochs as usize * base.len().div_ceil(bs)) as f64;
    let mut step = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs as usize);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..base.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss, mut correct) = (0.0f64, 0usize);
        for batch in order.chunks(bs) {
            let xs: Vec<Vec<f32>> = batch
                .iter()
                .map(|&k| to_tensor(&augment(&base[k], &cfg.augmentation, &mut rng), &mean, &std))
                .collect();
            let ys: Vec<usize> = batch.iter().map(|&k| labels[k]).collect();
            let (mut grad, l, c) = batch_gradient(&net, &params, &xs, &ys);
            let scale = 1.0 / batch.len() as f32;
            grad.iter_mut().for_each(|g| *g *= scale);
            let lr = cfg.learning_rate * (0.5 * (1.0 + (PI * step as f64 / total_steps).cos())) as f32;
            adam.step(&mut params, &grad, lr);
            step += 1;
            loss += l;
            correct += c;
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(RecognizerError::Backend(format!("training diverged in epoch {epoch}")));
        }
        let snapshot = Classifier::from_params(cfg, &set.class_names, mean, std, net.clone(), params.clone());
        history.push(EpochStats {
            epoch,
            train_loss: loss / base.len() as f64,
            train_accuracy: correct as f64 / base.len() as f64,
            val_accuracy: evaluate(&snapshot, set, &split.val)?,
        });
    }
    Ok((
        Classifier::from_params(cfg, &set.class_names, mean, std, net, params),
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                backbone: "resnet50".into(),
                ..Default::default()
            },
            TrainConfig {
                input_side: 8,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(
                matches!(cfg.validate(), Err(RecognizerError::InvalidConfig(_))),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn disabled_augmentation_is_identity() {
        let img = RgbImage::from_fn(48, 48, |x, y| Rgb([x as u8 * 5, y as u8 * 5, 77]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment(&img, &Augmentation::none(), &mut rng), img);
        let changed = (0..8).any(|_| augment(&img, &Augmentation::default(), &mut rng) != img);
        assert!(changed);
        assert_eq!(augment(&img, &Augmentation::default(), &mut rng).dimensions(), (48, 48));
    }

    #[test]
    fn stats_of_constant_images() {
        let imgs = vec![RgbImage::from_pixel(4, 4, Rgb([255, 0, 51]))];
        let (m, s) = channel_stats(&imgs);
        assert!((m[0] - 1.0).abs() < 1e-6 && m[1] == 0.0 && (m[2] - 0.2).abs() < 1e-6);
        assert!(s.iter().all(|&v| v == 1e-3));
    }
}
