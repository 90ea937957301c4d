//! Closed-set face classification over the roster's classes.
//!
//! [`split_dataset`] partitions harvested samples, [`train`] fits a small
//! residual CNN on the CPU, and any [`Recognizer`] turns a face crop into a
//! softmax [`Prediction`] that [`accept_prediction`] thresholds.

mod model;
mod net;
mod split;
mod train;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use image::RgbImage;
use thiserror::Error;

pub use model::{manifest_path_for, Classifier, Manifest, MANIFEST_SCHEMA_VERSION};
pub use split::{split_dataset, DatasetSplit, SplitFractions};
pub use train::{
    augment, evaluate, prepare_image, train, Augmentation, EpochStats, Sample, TrainConfig, TrainingSet, BACKBONES,
};

#[derive(Debug, Error)]
pub enum RecognizerError {
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("recognizer backend error: {0}")]
    Backend(String),
    #[error("face image is empty")]
    EmptyImage,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad model {path}: {reason}")]
    BadModel { path: PathBuf, reason: String },
}

pub type Result<T, E = RecognizerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// One probability per class, in class order; sums to 1.
    pub probs: Vec<f64>,
    pub argmax_index: usize,
    pub argmax_class: String,
    pub argmax_prob: f64,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let e: Vec<f64> = logits.iter().map(|&v| (v as f64 - m).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

impl Prediction {
    pub fn from_logits(logits: &[f32], class_names: &[String]) -> Result<Self> {
        if logits.len() != class_names.len() || logits.is_empty() {
            return Err(RecognizerError::Backend(format!(
                "{} logits for {} classes",
                logits.len(),
                class_names.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(RecognizerError::Backend("non-finite logits".into()));
        }
        let probs = softmax(logits);
        // Ties go to the lowest class index.
        let mut argmax_index = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[argmax_index] {
                argmax_index = i;
            }
        }
        Ok(Self {
            argmax_class: class_names[argmax_index].clone(),
            argmax_prob: probs[argmax_index],
            argmax_index,
            probs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Accepted(String),
    Rejected,
}

impl Decision {
    pub fn accepted(&self) -> Option<&str> {
        match self {
            Decision::Accepted(c) => Some(c),
            Decision::Rejected => None,
        }
    }
}

/// Accept the top class iff its probability is strictly above `theta`.
pub fn accept_prediction(pred: &Prediction, theta: f64) -> Decision {
    if pred.argmax_prob > theta {
        Decision::Accepted(pred.argmax_class.clone())
    } else {
        Decision::Rejected
    }
}

/// Anything that scores a face crop against a fixed class list. Shared
/// across worker threads, so implementations must be read-only.
pub trait Recognizer: Send + Sync {
    fn class_names(&self) -> &[String];

    /// Raw scores, one per class.
    fn logits(&self, face: &RgbImage) -> Result<Vec<f32>>;

    fn predict(&self, face: &RgbImage) -> Result<Prediction> {
        if face.width() == 0 || face.height() == 0 {
            return Err(RecognizerError::EmptyImage);
        }
        let logits = self.logits(face)?;
        Prediction::from_logits(&logits, self.class_names())
    }
}

impl<R: Recognizer + ?Sized> Recognizer for &R {
    fn class_names(&self) -> &[String] {
        (**self).class_names()
    }

    fn logits(&self, face: &RgbImage) -> Result<Vec<f32>> {
        (**self).logits(face)
    }
}

type LogitFn = dyn Fn(&RgbImage) -> Vec<f32> + Send + Sync;

/// A recognizer whose logits are supplied by the caller.
pub struct StubRecognizer {
    class_names: Vec<String>,
    logits: Box<LogitFn>,
}

impl StubRecognizer {
    pub fn fixed(class_names: Vec<String>, logits: Vec<f32>) -> Self {
        Self::from_fn(class_names, move |_| logits.clone())
    }

    pub fn from_fn(class_names: Vec<String>, f: impl Fn(&RgbImage) -> Vec<f32> + Send + Sync + 'static) -> Self {
        Self {
            class_names,
            logits: Box::new(f),
        }
    }
}

impl std::fmt::Debug for StubRecognizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StubRecognizer")
            .field("class_names", &self.class_names)
            .finish_non_exhaustive()
    }
}

impl Recognizer for StubRecognizer {
    fn class_names(&self) -> &[String] {
        &self.class_names
    }

    fn logits(&self, face: &RgbImage) -> Result<Vec<f32>> {
        Ok((self.logits)(face))
    }
}

/// Wraps a recognizer and counts how often it is evaluated.
#[derive(Debug)]
pub struct Counting<R> {
    inner: R,
    calls: AtomicU64,
}

impl<R> Counting<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &R {
        &self.inner
    }
}

impl<R: Recognizer> Recognizer for Counting<R> {
    fn class_names(&self) -> &[String] {
        self.inner.class_names()
    }

    fn logits(&self, face: &RgbImage) -> Result<Vec<f32>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.logits(face)
    }
}
