//! Face detection for gallery cells.
//!
//! Two detector kinds share one contract ([`FaceDetector::detect`]): boxes in
//! the caller's pixel space, clipped to the image, confidences in `[0, 1]`
//! and at least `min_confidence`, sorted best first.
//!
//! * `neural_ssd` runs a BlazeFace short-range TF-Lite model on a small
//!   built-in interpreter (float kernels only, no native dependencies).
//! * `haar_cascade` evaluates an OpenCV Haar cascade XML file. Confidence is
//!   derived from the number of raw hits merged into a detection.
//!
//! Both model files ship in `models/`; see `models/README.md` for their
//! origin and licences.

mod blazeface;
mod flatbuf;
mod haar;
mod tflite;

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::RgbImage;
use proctor_core::PixelRect;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use blazeface::{letterbox, BlazeFace};
use haar::Cascade;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("cannot load detector model {path}: {reason}")]
    ModelLoad { path: PathBuf, reason: String },
    #[error("detector inference failed: {0}")]
    Inference(String),
    #[error("invalid detector spec: {0}")]
    InvalidSpec(String),
    #[error("cannot run detection on an empty image")]
    EmptyImage,
}

pub type Result<T, E = DetectError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    NeuralSsd,
    HaarCascade,
}

impl DetectorKind {
    /// Path of the model file bundled with this crate.
    pub fn bundled_model(self) -> PathBuf {
        let file = match self {
            Self::NeuralSsd => "face_detection_short_range.tflite",
            Self::HaarCascade => "haarcascade_frontalface_default.xml",
        };
        Path::new(env!("CARGO_MANIFEST_DIR")).join("models").join(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub model_artifact: PathBuf,
    /// Expected SHA-256 of the model file (hex); checked at load when set.
    #[serde(default)]
    pub sha256: Option<String>,
    /// Side of the square working canvas the image is letterboxed into
    /// (neural), or the longest side images are shrunk to (haar).
    #[serde(default = "default_input_side")]
    pub input_side: u32,
    #[serde(default = "default_min_confidence")]
    pub min_confidence: f32,
}

fn default_input_side() -> u32 {
    300
}

fn default_min_confidence() -> f32 {
    0.5
}

impl DetectorSpec {
    /// Spec for the bundled model of `kind` with default parameters.
    pub fn bundled(kind: DetectorKind) -> Self {
        Self {
            kind,
            model_artifact: kind.bundled_model(),
            sha256: None,
            input_side: default_input_side(),
            min_confidence: default_min_confidence(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_side == 0 {
            return Err(DetectError::InvalidSpec("input_side must be positive".into()));
        }
        if !self.min_confidence.is_finite() {
            return Err(DetectError::InvalidSpec("min_confidence must be finite".into()));
        }
        Ok(())
    }
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self::bundled(DetectorKind::NeuralSsd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: PixelRect,
    pub confidence: f32,
}

enum Backend {
    Neural(BlazeFace),
    Haar(Cascade),
}

/// A loaded detector. Inference only reads the model, so one instance can
/// be shared across threads.
pub struct FaceDetector {
    spec: DetectorSpec,
    backend: Backend,
}

impl std::fmt::Debug for FaceDetector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FaceDetector")
            .field("spec", &self.spec)
            .finish_non_exhaustive()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

impl FaceDetector {
    pub fn load(spec: &DetectorSpec) -> Result<Self> {
        spec.validate()?;
        let path = &spec.model_artifact;
        let load_err = |reason: String| DetectError::ModelLoad {
            path: path.clone(),
            reason,
        };
        let bytes = fs::read(path).map_err(|e| load_err(e.to_string()))?;
        if let Some(want) = &spec.sha256 {
            let got = sha256_hex(&bytes);
            if !got.eq_ignore_ascii_case(want.trim()) {
                return Err(load_err(format!("sha256 mismatch: expected {want}, file has {got}")));
            }
        }
        let backend = match spec.kind {
            DetectorKind::NeuralSsd => {
                let graph = tflite::Graph::parse(&bytes).map_err(load_err)?;
                Backend::Neural(BlazeFace::new(graph).map_err(load_err)?)
            }
            DetectorKind::HaarCascade => {
                let xml = String::from_utf8(bytes).map_err(|e| load_err(e.to_string()))?;
                Backend::Haar(Cascade::parse(&xml).map_err(load_err)?)
            }
        };
        Ok(Self {
            spec: spec.clone(),
            backend,
        })
    }

    pub fn spec(&self) -> &DetectorSpec {
        &self.spec
    }

    /// Detections with confidence ≥ the spec's `min_confidence`.
    pub fn detect(&self, image: &RgbImage) -> Result<Vec<Detection>> {
        self.detect_above(image, self.spec.min_confidence)
    }

    /// Like [`detect`](Self::detect) with an explicit threshold.
    pub fn detect_above(&self, image: &RgbImage, min_confidence: f32) -> Result<Vec<Detection>> {
        let (w, h) = image.dimensions();
        if w == 0 || h == 0 {
            return Err(DetectError::EmptyImage);
        }
        let mut dets = match &self.backend {
            Backend::Neural(net) => self.run_neural(net, image, min_confidence)?,
            Backend::Haar(cascade) => self.run_haar(cascade, image),
        };
        dets.retain(|d| d.confidence >= min_confidence && !d.bbox.is_empty());
        dets.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then((a.bbox.y, a.bbox.x).cmp(&(b.bbox.y, b.bbox.x)))
        });
        Ok(dets)
    }

    /// Raw `(regressors, logits)` of the neural network for an already
    /// normalized NHWC input. Errors for cascade detectors.
    pub fn network_outputs(&self, input: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
        match &self.backend {
            Backend::Neural(net) => net.raw(input).map_err(DetectError::Inference),
            Backend::Haar(_) => Err(DetectError::Inference(
                "cascade detectors have no network outputs".into(),
            )),
        }
    }

    /// The single most confident detection, if any.
    pub fn detect_best(&self, image: &RgbImage) -> Result<Option<Detection>> {
        Ok(self.detect(image)?.into_iter().next())
    }

    fn run_neural(&self, net: &BlazeFace, image: &RgbImage, min_conf: f32) -> Result<Vec<Detection>> {
        let (w, h) = image.dimensions();
        let (mut canvas, square, (ox, oy)) = letterbox(image, self.spec.input_side);
        let native = net.native_side() as u32;
        if canvas.width() != native {
            canvas = imageops::resize(&canvas, native, native, FilterType::Triangle);
        }
        // A logit can't produce a score below 0, so a non-positive threshold
        // means "everything".
        let boxes = net
            .detect_canvas(&canvas, min_conf.max(0.0))
            .map_err(DetectError::Inference)?;
        let s = square as f32;
        Ok(boxes
            .into_iter()
            .filter_map(|b| {
                let rect = clip_rect(
                    b.xmin * s - ox as f32,
                    b.ymin * s - oy as f32,
                    b.xmax * s - ox as f32,
                    b.ymax * s - oy as f32,
                    w,
                    h,
                )?;
                Some(Detection {
                    bbox: rect,
                    confidence: b.score.clamp(0.0, 1.0),
                })
            })
            .collect())
    }

    fn run_haar(&self, cascade: &Cascade, image: &RgbImage) -> Vec<Detection> {
        let (w, h) = image.dimensions();
        let mut gray = haar::to_gray(image);
        let side = self.spec.input_side;
        let scale = if w.max(h) > side {
            let s = side as f64 / w.max(h) as f64;
            let (nw, nh) = (
                ((w as f64 * s).round() as u32).max(1),
                ((h as f64 * s).round() as u32).max(1),
            );
            gray = haar::resize_bilinear(&gray, nw, nh);
            w as f64 / nw as f64
        } else {
            1.0
        };
        cascade
            .detect(&gray)
            .into_iter()
            .filter_map(|(r, hits)| {
                let f = |v: u32| (v as f64 * scale) as f32;
                let rect = clip_rect(f(r.x), f(r.y), f(r.right()), f(r.bottom()), w, h)?;
                Some(Detection {
                    bbox: rect,
                    confidence: haar_confidence(hits),
                })
            })
            .collect()
    }
}

/// Maps a Haar group's hit count to `[0, 1)`. Four hits give 0.5, so the
/// default threshold keeps the same groups as OpenCV's `minNeighbors = 3`.
pub fn haar_confidence(hits: u32) -> f32 {
    hits as f32 / (hits as f32 + 4.0)
}

fn clip_rect(x0: f32, y0: f32, x1: f32, y1: f32, w: u32, h: u32) -> Option<PixelRect> {
    if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
        return None;
    }
    let cx = |v: f32| v.clamp(0.0, w as f32);
    let cy = |v: f32| v.clamp(0.0, h as f32);
    let (l, t) = (cx(x0).floor() as u32, cy(y0).floor() as u32);
    let (r, b) = (cx(x1).ceil() as u32, cy(y1).ceil() as u32);
    (r > l && b > t).then(|| PixelRect::new(l, t, r - l, b - t))
}

/// Load the detector described by `spec` and run it once. Prefer
/// [`FaceDetector`] when detecting on many images.
pub fn detect_faces(image: &RgbImage, spec: &DetectorSpec) -> Result<Vec<Detection>> {
    FaceDetector::load(spec)?.detect(image)
}

/// The crop rectangle for `bbox` grown by `margin_frac` of its size on every
/// side and clipped to a `width`×`height` image. Never empty for a non-empty
/// image.
pub fn crop_rect(bbox: PixelRect, margin_frac: f32, width: u32, height: u32) -> PixelRect {
    let m = margin_frac.max(0.0) as f64;
    let dx = (bbox.w as f64 * m).round();
    let dy = (bbox.h as f64 * m).round();
    let x0 = (bbox.x as f64 - dx).max(0.0);
    let y0 = (bbox.y as f64 - dy).max(0.0);
    let x1 = (bbox.right() as f64 + dx).min(width as f64);
    let y1 = (bbox.bottom() as f64 + dy).min(height as f64);
    let x0 = (x0 as u32).min(width.saturating_sub(1));
    let y0 = (y0 as u32).min(height.saturating_sub(1));
    let x1 = (x1 as u32).max(x0 + 1);
    let y1 = (y1 as u32).max(y0 + 1);
    PixelRect::new(x0, y0, x1 - x0, y1 - y0)
}

/// Cut the (margin-expanded) detection out of `frame`.
pub fn crop_face(frame: &RgbImage, det: &Detection, margin_frac: f32) -> RgbImage {
    let r = crop_rect(det.bbox, margin_frac, frame.width(), frame.height());
    imageops::crop_imm(frame, r.x, r.y, r.w, r.h).to_image()
}
