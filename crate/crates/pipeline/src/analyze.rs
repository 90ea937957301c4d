//! Per-second recognition over an exam recording.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use proctor_core::{AnalysisConfig, Fps, GridLayout, RecognitionEvent};
use proctor_detect::{crop_face, FaceDetector};
use proctor_recognizer::{accept_prediction, Recognizer};
use proctor_video::{open_video, Selection, VideoMeta};
use serde::{Deserialize, Serialize};

use crate::dataset::by_second;
use crate::pool::map_ordered;
use crate::{cell_images, is_blank, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalysisMode {
    /// Decode and classify one frame per second; the result stands for the
    /// whole second.
    #[default]
    PerSecond,
    /// Classify every face in every frame. The event for a second is still
    /// the one from its first frame; the extra work is only measured.
    PerFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeOptions {
    pub mode: AnalysisMode,
    pub worker_count: usize,
    /// Must match the margin used when the dataset was built.
    pub crop_margin: f32,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            mode: AnalysisMode::PerSecond,
            worker_count: 4,
            crop_margin: 0.15,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzeStats {
    /// Seconds covered by the recording (the final one may be partial).
    pub total_seconds: u64,
    /// Seconds for which at least one frame was examined.
    pub seconds_analyzed: u64,
    pub frames_examined: u64,
    /// (second, cell) pairs whose examined frame had a face.
    pub face_cells: u64,
    pub recognizer_calls: u64,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub events: Vec<RecognitionEvent>,
    pub stats: AnalyzeStats,
    pub video: VideoMeta,
}

/// One event per (second, cell) in (second, cell index) order.
pub fn analyze_video(
    video: &Path,
    recognizer: &dyn Recognizer,
    detector: &FaceDetector,
    cfg: &AnalysisConfig,
    opts: &AnalyzeOptions,
) -> Result<Analysis> {
    cfg.validate()?;
    let (meta, stream) = open_video(video, Fps::new(cfg.fps_assumed)?)?;
    let grid = GridLayout::new(cfg.rows, cfg.cols, meta.width, meta.height)?;
    let stream = match opts.mode {
        AnalysisMode::PerSecond => stream.select(Selection::FirstOfSecond),
        AnalysisMode::PerFrame => stream.select(Selection::All),
    };
    let calls = AtomicU64::new(0);
    let theta = cfg.accept_threshold;
    let per_second = map_ordered(by_second(stream, meta.fps), opts.worker_count, |(second, frames)| {
        let mut events: Vec<RecognitionEvent> = Vec::with_capacity(grid.cell_count());
        let mut faces = 0;
        for (i, frame) in frames.iter().enumerate() {
            for (slot, (cell, img)) in cell_images(&frame.image, &grid).into_iter().enumerate() {
                let det = if is_blank(&img) {
                    None
                } else {
                    detector.detect_best(&img)?
                };
                let event = match det {
                    None => RecognitionEvent::no_face(second, cell),
                    Some(det) => {
                        calls.fetch_add(1, Ordering::Relaxed);
                        let pred = recognizer.predict(&crop_face(&img, &det, opts.crop_margin))?;
                        let accepted = accept_prediction(&pred, theta).accepted().is_some();
                        RecognitionEvent::recognized(second, cell, pred.argmax_class, pred.argmax_prob as f32, accepted)
                    }
                };
                if i == 0 {
                    faces += event.face_found as u64;
                    events.push(event);
                } else {
                    debug_assert_eq!(events[slot].cell, cell);
                }
            }
        }
        Ok((events, frames.len() as u64, faces))
    })?;
    let mut stats = AnalyzeStats {
        total_seconds: meta.seconds(),
        ..Default::default()
    };
    let mut events = Vec::new();
    for (ev, frames, faces) in per_second {
        stats.seconds_analyzed += 1;
        stats.frames_examined += frames;
        stats.face_cells += faces;
        events.extend(ev);
    }
    stats.recognizer_calls = calls.into_inner();
    Ok(Analysis {
        events,
        stats,
        video: meta,
    })
}
