//! Reading participant names from gallery cells.
//!
//! The label strip is cut from each cell ([`extract_name_strip`]), turned to
//! gray, thresholded with [`binarize`] (dark pixels drop to 0, the rest keep
//! their value), enlarged with [`upscale`], read by an [`OcrEngine`] and
//! normalized with [`clean_name`].

pub mod font;
mod glyph_engine;
mod tesseract;

use std::collections::BTreeSet;
use std::fmt;

use image::imageops::{self, FilterType};
use image::{GrayImage, Luma, RgbImage};
use proctor_core::PixelRect;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use glyph_engine::GlyphMatcher;
pub use tesseract::TesseractEngine;

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("OCR engine unavailable: {0}")]
    EngineUnavailable(String),
    #[error("OCR engine failed: {0}")]
    EngineFailed(String),
    #[error("invalid OCR configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = OcrError> = std::result::Result<T, E>;

/// Location of the name label inside a cell, as fractions of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NameStripSpec {
    pub x_frac: f64,
    pub y_frac: f64,
    pub w_frac: f64,
    pub h_frac: f64,
}

impl Default for NameStripSpec {
    fn default() -> Self {
        Self {
            x_frac: 0.0,
            y_frac: 0.85,
            w_frac: 0.40,
            h_frac: 0.15,
        }
    }
}

impl NameStripSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.x_frac, self.y_frac, self.w_frac, self.h_frac];
        let eps = 1e-9;
        if fr.iter().any(|v| !(0.0..=1.0).contains(v))
            || self.x_frac + self.w_frac > 1.0 + eps
            || self.y_frac + self.h_frac > 1.0 + eps
        {
            return Err(OcrError::InvalidConfig(format!("name strip {self:?} leaves the cell")));
        }
        Ok(())
    }

    /// The strip rectangle inside a `w`×`h` cell; at least 1×1.
    pub fn rect_in(&self, w: u32, h: u32) -> PixelRect {
        let round = |v: f64| v.round().max(0.0) as u32;
        let x = round(self.x_frac * w as f64).min(w.saturating_sub(1));
        let y = round(self.y_frac * h as f64).min(h.saturating_sub(1));
        let rw = round(self.w_frac * w as f64).clamp(1, (w - x).max(1));
        let rh = round(self.h_frac * h as f64).clamp(1, (h - y).max(1));
        PixelRect::new(x, y, rw, rh)
    }
}

pub const DEFAULT_CHARSET: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz -'";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    /// Built-in template matcher for the bundled bitmap font.
    Glyph,
    /// The `tesseract` command-line program.
    Tesseract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcrConfig {
    pub threshold: u8,
    /// Retry with an Otsu threshold when the fixed one reads no name.
    pub auto_threshold: bool,
    pub upscale_k: u32,
    pub allowed_charset: String,
    pub engine: EngineKind,
    pub strip: NameStripSpec,
}

impl Default for OcrConfig {
    fn default() -> Self {
        Self {
            threshold: 180,
            auto_threshold: true,
            upscale_k: 3,
            allowed_charset: DEFAULT_CHARSET.to_string(),
            engine: EngineKind::Glyph,
            strip: NameStripSpec::default(),
        }
    }
}

impl OcrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.upscale_k == 0 {
            return Err(OcrError::InvalidConfig("upscale_k must be at least 1".into()));
        }
        if self.charset().iter().all(|c| c.is_whitespace()) {
            return Err(OcrError::InvalidConfig(
                "allowed_charset has no visible characters".into(),
            ));
        }
        self.strip.validate()
    }

    fn charset(&self) -> BTreeSet<char> {
        self.allowed_charset.chars().collect()
    }
}

/// A cleaned, upper-case, single-spaced name. Construct via [`clean_name`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CleanName(String);

impl CleanName {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for CleanName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Drop characters outside the charset, collapse whitespace, upper-case.
/// `None` plays the role of "no name".
pub fn clean_name(raw: &str, cfg: &OcrConfig) -> Option<CleanName> {
    let allowed = cfg.charset();
    // Case-folding happens first so an upper-case-only charset still admits
    // lower-case engine output.
    let kept: String = raw
        .chars()
        .flat_map(char::to_uppercase)
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .filter(|&c| c == ' ' || allowed.contains(&c))
        .collect();
    let text = kept.split_whitespace().collect::<Vec<_>>().join(" ");
    (!text.is_empty()).then_some(CleanName(text))
}

/// The name label region of a cell.
pub fn extract_name_strip(cell: &RgbImage, spec: &NameStripSpec) -> RgbImage {
    let (w, h) = cell.dimensions();
    if w == 0 || h == 0 {
        return RgbImage::new(1, 1);
    }
    let r = spec.rect_in(w, h);
    imageops::crop_imm(cell, r.x, r.y, r.w, r.h).to_image()
}

pub fn to_gray(img: &RgbImage) -> GrayImage {
    imageops::grayscale(img)
}

/// Pixels below `t` become 0; all others keep their value.
pub fn binarize(gray: &GrayImage, t: u8) -> GrayImage {
    let mut out = gray.clone();
    for p in out.pixels_mut() {
        if p[0] < t {
            *p = Luma([0]);
        }
    }
    out
}

/// Nearest-neighbour enlargement by an integer factor.
pub fn upscale(img: &GrayImage, k: u32) -> GrayImage {
    let k = k.max(1);
    if k == 1 {
        return img.clone();
    }
    imageops::resize(img, img.width() * k, img.height() * k, FilterType::Nearest)
}

/// Threshold for [`binarize`] that maximizes between-class variance of the
/// gray-level histogram. Returned as a "keep at or above" level, i.e. one
/// more than OpenCV's `THRESH_OTSU` value (which keeps values above it).
pub fn otsu_threshold(gray: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for p in gray.pixels() {
        hist[p[0] as usize] += 1;
    }
    let n = gray.pixels().len() as f64;
    if n == 0.0 {
        return 0;
    }
    let mu: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum::<f64>() / n;
    let (mut q1, mut mu1) = (0.0f64, 0.0f64);
    let (mut best_sigma, mut best) = (0.0f64, 0usize);
    // Same update order as OpenCV so ties resolve identically.
    for (i, &c) in hist.iter().enumerate() {
        let p = c as f64 / n;
        mu1 *= q1;
        q1 += p;
        let q2 = 1.0 - q1;
        if q1.min(q2) < f32::EPSILON as f64 || q1.max(q2) > 1.0 - f32::EPSILON as f64 {
            continue;
        }
        mu1 = (mu1 + i as f64 * p) / q1;
        let mu2 = (mu - q1 * mu1) / q2;
        let sigma = q1 * q2 * (mu1 - mu2) * (mu1 - mu2);
        if sigma > best_sigma {
            best_sigma = sigma;
            best = i;
        }
    }
    (best + 1).min(255) as u8
}

/// An OCR backend. Implementations must be safe to call concurrently.
pub trait OcrEngine: Send + Sync {
    fn name(&self) -> &str;
    fn version(&self) -> String;
    /// Raw text found in `image`, verbatim (possibly empty).
    fn recognize(&self, image: &GrayImage) -> Result<String>;
}

/// Built-in engine; pure, so concurrent calls need no locking.
#[derive(Debug, Default, Clone)]
pub struct GlyphEngine {
    matcher: GlyphMatcher,
}

impl OcrEngine for GlyphEngine {
    fn name(&self) -> &str {
        "glyph"
    }

    fn version(&self) -> String {
        format!("proctor-ocr {}", env!("CARGO_PKG_VERSION"))
    }

    fn recognize(&self, image: &GrayImage) -> Result<String> {
        Ok(self.matcher.read(image))
    }
}

pub fn engine_for(kind: EngineKind) -> Result<Box<dyn OcrEngine>> {
    Ok(match kind {
        EngineKind::Glyph => Box::new(GlyphEngine::default()),
        EngineKind::Tesseract => Box::new(TesseractEngine::detect()?),
    })
}

/// Run `engine` on an image; empty images read as "".
pub fn ocr_text(image: &GrayImage, engine: &dyn OcrEngine) -> Result<String> {
    if image.width() == 0 || image.height() == 0 {
        return Ok(String::new());
    }
    engine.recognize(image)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameReading {
    pub raw: String,
    pub name: Option<CleanName>,
    pub threshold: u8,
}

/// Full strip → name pipeline for one cell image.
pub fn read_name(cell: &RgbImage, cfg: &OcrConfig, engine: &dyn OcrEngine) -> Result<NameReading> {
    let gray = to_gray(&extract_name_strip(cell, &cfg.strip));
    let attempt = |t: u8| -> Result<NameReading> {
        let prepared = upscale(&binarize(&gray, t), cfg.upscale_k);
        let raw = ocr_text(&prepared, engine)?;
        let name = clean_name(&raw, cfg);
        Ok(NameReading {
            raw,
            name,
            threshold: t,
        })
    };
    let first = attempt(cfg.threshold)?;
    if first.name.is_some() || !cfg.auto_threshold {
        return Ok(first);
    }
    let t = otsu_threshold(&gray);
    if t == cfg.threshold {
        return Ok(first);
    }
    attempt(t)
}
