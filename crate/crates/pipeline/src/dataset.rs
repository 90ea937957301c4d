//! Labeled face datasets harvested from a training recording.
//!
//! Every sampled frame is cut into gallery cells; a cell with a detected
//! face contributes one crop, labeled by reading the cell's name strip.
//! Labels are read at most once per (second, cell). The raw classes are
//! then pruned, reconciled against the roster and written out as one
//! directory per student plus `manifest.json`.

use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use proctor_core::{second_of_frame, AnalysisConfig, CellRef, Fps, GridLayout, Roster};
use proctor_detect::{crop_face, FaceDetector};
use proctor_ocr::{read_name, OcrConfig, OcrEngine};
use proctor_recognizer::{Sample, TrainingSet};
use proctor_video::{open_video, Frame};
use serde::{Deserialize, Serialize};

use crate::pool::map_ordered;
use crate::reconcile::{reconcile_with_roster, MergeReport};
use crate::{cell_images, is_blank, PipelineError, Result};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const STAGING_DIR: &str = "crops";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSample {
    /// Crop path relative to the dataset root.
    pub image_ref: PathBuf,
    pub cell: CellRef,
    pub frame_idx: u64,
    /// Name as read from the strip, before roster reconciliation.
    pub raw_label: String,
    pub detection_conf: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub root: PathBuf,
    pub classes: BTreeMap<String, Vec<FaceSample>>,
}

impl LabeledDataset {
    pub fn empty(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            classes: BTreeMap::new(),
        }
    }

    pub fn sample_count(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Class → set of (cell, frame) provenance keys; independent of file
    /// names and sample order.
    pub fn provenance(&self) -> BTreeMap<String, BTreeSet<(CellRef, u64)>> {
        self.classes
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|s| (s.cell, s.frame_idx)).collect()))
            .collect()
    }

    /// Load every crop as a training set; class order is sorted by name.
    pub fn to_training_set(&self) -> Result<TrainingSet> {
        let mut samples = Vec::with_capacity(self.sample_count());
        for (label, list) in self.classes.values().enumerate() {
            for s in list {
                let path = self.root.join(&s.image_ref);
                let image = image::open(&path)
                    .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?
                    .to_rgb8();
                samples.push(Sample { image, label });
            }
        }
        Ok(TrainingSet {
            class_names: self.classes.keys().cloned().collect(),
            samples,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub frames_scanned: u64,
    pub faces_detected: u64,
    /// Faces whose cell label could not be read.
    pub ocr_failures: u64,
    pub ocr_calls: u64,
    pub classes_before_prune: usize,
    pub classes_after_prune: usize,
    pub merges_substring: usize,
    pub merges_fuzzy: usize,
    pub dropped_non_roster: usize,
    pub samples_final: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    /// Keep frames whose index is a multiple of this.
    pub sample_every_n: u64,
    pub worker_count: usize,
    /// Crop margin around each detection, as a fraction of its size.
    pub crop_margin: f32,
    /// Classes with fewer samples are pruned before reconciliation.
    pub min_count: usize,
    /// Maximum normalized edit distance for a fuzzy roster match.
    pub fuzzy_max_dist: f64,
    /// Fraction of the roster that must survive as classes.
    pub min_class_frac: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            sample_every_n: 30,
            worker_count: 4,
            crop_margin: 0.15,
            min_count: 100,
            fuzzy_max_dist: 0.3,
            min_class_frac: 0.8,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.sample_every_n == 0 {
            return bad("sample_every_n must be at least 1");
        }
        if self.worker_count == 0 {
            return bad("worker_count must be at least 1");
        }
        if !(self.crop_margin >= 0.0 && self.crop_margin <= 1.0) {
            return bad("crop_margin must be within [0,1]");
        }
        if !(0.0..=1.0).contains(&self.fuzzy_max_dist) || !(0.0..=1.0).contains(&self.min_class_frac) {
            return bad("fuzzy_max_dist and min_class_frac must be within [0,1]");
        }
        Ok(())
    }
}

/// Everything needed to harvest one recording.
pub struct Harvest<'a> {
    pub detector: &'a FaceDetector,
    pub ocr: &'a OcrConfig,
    pub engine: &'a dyn OcrEngine,
    pub analysis: &'a AnalysisConfig,
    pub build: &'a BuildConfig,
}

#[derive(Default)]
struct BatchOut {
    samples: Vec<(String, FaceSample)>,
    frames: u64,
    faces: u64,
    ocr_failures: u64,
    ocr_calls: u64,
}

/// Group a frame stream into runs that share a second.
pub(crate) fn by_second<I>(frames: I, fps: Fps) -> impl Iterator<Item = Result<(u64, Vec<Frame>)>>
where
    I: Iterator<Item = proctor_video::Result<Frame>>,
{
    let mut frames = frames.peekable();
    std::iter::from_fn(move || {
        let first = match frames.next()? {
            Ok(f) => f,
            Err(e) => return Some(Err(e.into())),
        };
        let second = second_of_frame(first.index, fps);
        let mut batch = vec![first];
        while let Some(Ok(f)) = frames.peek() {
            if second_of_frame(f.index, fps) != second {
                break;
            }
            batch.push(frames.next().expect("peeked").expect("peeked ok"));
        }
        Some(Ok((second, batch)))
    })
}

fn crop_name(frame_idx: u64, cell: CellRef) -> PathBuf {
    Path::new(STAGING_DIR).join(format!("f{frame_idx:07}_r{}_c{}.png", cell.row, cell.col))
}

impl Harvest<'_> {
    fn batch(&self, root: &Path, grid: &GridLayout, frames: Vec<Frame>) -> Result<BatchOut> {
        let mut out = BatchOut {
            frames: frames.len() as u64,
            ..Default::default()
        };
        let cut: Vec<Vec<(CellRef, RgbImage)>> = frames.iter().map(|f| cell_images(&f.image, grid)).collect();
        for c in 0..grid.cell_count() {
            let label: OnceCell<Option<String>> = OnceCell::new();
            for (frame, cells) in frames.iter().zip(&cut) {
                let (cell, img) = &cells[c];
                if is_blank(img) {
                    continue;
                }
                let Some(det) = self.detector.detect_best(img)? else {
                    continue;
                };
                out.faces += 1;
                if label.get().is_none() {
                    out.ocr_calls += 1;
                    let reading = read_name(img, self.ocr, self.engine)?;
                    let _ = label.set(reading.name.map(|n| n.into_string()));
                }
                let Some(name) = label.get().expect("set above") else {
                    out.ocr_failures += 1;
                    continue;
                };
                let image_ref = crop_name(frame.index, *cell);
                let path = root.join(&image_ref);
                crop_face(img, &det, self.build.crop_margin)
                    .save(&path)
                    .map_err(|e| PipelineError::Backend(format!("{}: {e}", path.display())))?;
                out.samples.push((
                    name.clone(),
                    FaceSample {
                        image_ref,
                        cell: *cell,
                        frame_idx: frame.index,
                        raw_label: name.clone(),
                        detection_conf: det.confidence,
                    },
                ));
            }
        }
        Ok(out)
    }

    /// Harvest raw OCR-labeled crops into `root/crops/`. The resulting
    /// sample set does not depend on the worker count.
    pub fn run(&self, video: &Path, root: &Path) -> Result<(LabeledDataset, BuildStats)> {
        self.build.validate()?;
        self.analysis.validate()?;
        let fallback = Fps::new(self.analysis.fps_assumed)?;
        let (meta, stream) = open_video(video, fallback)?;
        let grid = GridLayout::new(self.analysis.rows, self.analysis.cols, meta.width, meta.height)?;
        let staging = root.join(STAGING_DIR);
        fs::create_dir_all(&staging).map_err(PipelineError::io(&staging))?;
        let batches = by_second(stream.sample_every(self.build.sample_every_n), meta.fps).map(|r| r.map(|(_, b)| b));
        let outs = map_ordered(batches, self.build.worker_count, |frames| {
            self.batch(root, &grid, frames)
        })?;
        let mut ds = LabeledDataset::empty(root);
        let mut stats = BuildStats::default();
        for o in outs {
            stats.frames_scanned += o.frames;
            stats.faces_detected += o.faces;
            stats.ocr_failures += o.ocr_failures;
            stats.ocr_calls += o.ocr_calls;
            for (name, s) in o.samples {
                ds.classes.entry(name).or_default().push(s);
            }
        }
        stats.classes_before_prune = ds.class_count();
        Ok((ds, stats))
    }
}

/// Drop classes with fewer than `min_count` samples.
pub fn prune_small_classes(mut ds: LabeledDataset, min_count: usize) -> LabeledDataset {
    ds.classes.retain(|_, v| v.len() >= min_count);
    ds
}

/// Check the reconciled dataset is usable for training.
pub fn validate_dataset(ds: &LabeledDataset, roster: &Roster, min_class_frac: f64, min_count: usize) -> Result<()> {
    let required = ((min_class_frac * roster.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let short: Vec<&str> = ds
        .classes
        .iter()
        .filter(|(_, v)| v.len() < min_count)
        .map(|(k, _)| k.as_str())
        .collect();
    if ds.class_count() >= required && short.is_empty() {
        return Ok(());
    }
    let mut message = format!(
        "the training video is too short: {} of {} roster students have at least {min_count} usable face samples, {required} needed",
        ds.class_count() - short.len(),
        roster.len()
    );
    message.push_str(". Delete the dataset and record a longer training video in which every student's face and name label are visible.");
    Err(PipelineError::TooShortVideo {
        classes: ds.class_count() - short.len(),
        required,
        message,
    })
}

fn class_dir(name: &str) -> String {
    name.chars()
        .map(|c| if c == '/' || c == '\\' || c == '.' { '_' } else { c })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub classes: BTreeMap<String, Vec<FaceSample>>,
    pub stats: BuildStats,
    pub merges: MergeReport,
    pub producer: String,
}

/// Move the crops of `ds` into one directory per class, numbered in
/// (frame, cell) order, delete the staging area and write the manifest.
pub fn finalize_dataset(ds: LabeledDataset, stats: &BuildStats, merges: &MergeReport) -> Result<LabeledDataset> {
    let root = ds.root.clone();
    let mut classes = BTreeMap::new();
    for (name, mut samples) in ds.classes {
        samples.sort_by_key(|s| (s.frame_idx, s.cell));
        let dir = class_dir(&name);
        fs::create_dir_all(root.join(&dir)).map_err(PipelineError::io(root.join(&dir)))?;
        for (i, s) in samples.iter_mut().enumerate() {
            let to = Path::new(&dir).join(format!("{:06}.png", i + 1));
            fs::rename(root.join(&s.image_ref), root.join(&to)).map_err(PipelineError::io(root.join(&s.image_ref)))?;
            s.image_ref = to;
        }
        classes.insert(name, samples);
    }
    let staging = root.join(STAGING_DIR);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(PipelineError::io(&staging))?;
    }
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        classes,
        stats: stats.clone(),
        merges: merges.clone(),
        producer: format!("proctor-pipeline {}", env!("CARGO_PKG_VERSION")),
    };
    let path = root.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(PipelineError::io(&path))?;
    Ok(LabeledDataset {
        root,
        classes: manifest.classes,
    })
}

pub fn load_dataset(root: &Path) -> Result<(LabeledDataset, DatasetManifest)> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| PipelineError::Input(format!("no dataset at {}: {e}", root.display())))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(PipelineError::Input(format!(
            "{}: unsupported schema_version {}",
            path.display(),
            manifest.schema_version
        )));
    }
    let ds = LabeledDataset {
        root: root.to_path_buf(),
        classes: manifest.classes.clone(),
    };
    Ok((ds, manifest))
}

/// Clear a previous dataset at `root`; refuse to touch other content.
fn prepare_root(root: &Path) -> Result<()> {
    if !root.exists() {
        return fs::create_dir_all(root).map_err(PipelineError::io(root));
    }
    let mut entries = fs::read_dir(root).map_err(PipelineError::io(root))?.peekable();
    if entries.peek().is_none() {
        return Ok(());
    }
    if root.join(MANIFEST_FILE).is_file() || root.join(STAGING_DIR).is_dir() {
        fs::remove_dir_all(root).map_err(PipelineError::io(root))?;
        return fs::create_dir_all(root).map_err(PipelineError::io(root));
    }
    Err(PipelineError::Input(format!(
        "dataset root {} is not empty and holds no previous dataset",
        root.display()
    )))
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub dataset: LabeledDataset,
    pub stats: BuildStats,
    pub merges: MergeReport,
}

/// Harvest, prune, reconcile, validate and write a dataset at `root`. On
/// `TooShortVideo` the partial dataset is deleted.
pub fn build_dataset(harvest: &Harvest<'_>, video: &Path, roster: &Roster, root: &Path) -> Result<BuildOutcome> {
    if roster.is_empty() {
        return Err(PipelineError::Input("roster is empty".into()));
    }
    prepare_root(root)?;
    let cfg = harvest.build;
    let (raw, mut stats) = harvest.run(video, root)?;
    let pruned = prune_small_classes(raw, cfg.min_count);
    stats.classes_after_prune = pruned.class_count();
    let (reconciled, merges) = reconcile_with_roster(pruned, roster, cfg.fuzzy_max_dist)?;
    stats.merges_substring = merges.substring_merges();
    stats.merges_fuzzy = merges.fuzzy_merges();
    stats.dropped_non_roster = merges.dropped();
    stats.samples_final = reconciled.sample_count();
    if let Err(e) = validate_dataset(&reconciled, roster, cfg.min_class_frac, cfg.min_count) {
        fs::remove_dir_all(root).map_err(PipelineError::io(root))?;
        return Err(e);
    }
    let dataset = finalize_dataset(reconciled, &stats, &merges)?;
    Ok(BuildOutcome { dataset, stats, merges })
}
