//! The two phases of post-exam review.
//!
//! Before the exam, [`dataset`] harvests face crops from a training
//! recording and labels them from each cell's name strip. After the exam,
//! [`analyze`] classifies the face in every cell once per second and
//! [`report`] turns those events into presence windows, absence intervals
//! and charts.

pub mod analyze;
pub mod dataset;
mod error;
pub mod pool;
pub mod reconcile;
pub mod report;
pub mod train;

use image::RgbImage;
use proctor_core::{CellRef, GridLayout};

pub use analyze::{analyze_video, Analysis, AnalysisMode, AnalyzeOptions, AnalyzeStats};
pub use dataset::{
    build_dataset, finalize_dataset, load_dataset, prune_small_classes, validate_dataset, BuildConfig, BuildOutcome,
    BuildStats, DatasetManifest, FaceSample, Harvest, LabeledDataset,
};
pub use error::{PipelineError, Result};
pub use reconcile::{match_class, normalized_distance, reconcile_with_roster, MergeEntry, MergeOutcome, MergeReport};
pub use report::{render_report, summarize, Findings, ReportBundle, Summary};
pub use train::{train_on_dataset, TrainReport};

/// An unoccupied gallery slot: every pixel within a few levels of the
/// first. Such cells cannot hold a face, so the detector is skipped.
pub fn is_blank(cell: &RgbImage) -> bool {
    let Some(first) = cell.pixels().next() else {
        return true;
    };
    cell.pixels()
        .all(|p| p.0.iter().zip(first.0).all(|(a, b)| a.abs_diff(b) <= 6))
}

/// Cut a frame into its gallery cells, in row-major order.
pub fn cell_images(frame: &RgbImage, grid: &GridLayout) -> Vec<(CellRef, RgbImage)> {
    grid.partition()
        .into_iter()
        .map(|(cell, r)| (cell, image::imageops::crop_imm(frame, r.x, r.y, r.w, r.h).to_image()))
        .collect()
}
