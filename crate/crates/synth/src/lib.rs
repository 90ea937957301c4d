//! Deterministic synthetic gallery-view recordings.
//!
//! A [`SessionScript`] says who is in the meeting when, and when each
//! person steps away from the camera. [`generate_video`] renders it as an
//! H.264 MP4 (or Y4M) and returns the [`GroundTruth`]: per-segment cell
//! occupancy and face boxes. Frames within one second are identical, so a
//! one-frame-per-second reader sees exactly what the script says.

pub mod face;
pub mod script;
pub mod truth;

use std::path::{Path, PathBuf};

use image::RgbImage;
use proctor_core::{CellRef, Fps, GridLayout, PixelRect};
use proctor_video::{VideoError, VideoFormat, VideoWriter, WriterOptions};
use thiserror::Error;

pub use face::{FaceStyle, Pose};
pub use script::{reflow_layout, LayoutEvent, ParticipantScript, SessionScript, Span, DEMO_NAMES};
pub use truth::{CellTruth, GroundTruth, Segment, TRUTH_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid script: {0}")]
    InvalidScript(String),

    #[error("gallery holds {capacity} participants, script needs {wanted}")]
    CapacityExceeded { capacity: usize, wanted: usize },

    #[error(transparent)]
    Video(#[from] VideoError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

// splitmix64 finalizer; stable across platforms and toolchains.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders the frames of a validated script, one still per second.
pub struct Renderer<'a> {
    script: &'a SessionScript,
    grid: GridLayout,
    timeline: Vec<Vec<String>>,
    styles: Vec<FaceStyle>,
}

impl<'a> Renderer<'a> {
    pub fn new(script: &'a SessionScript) -> Result<Self, SynthError> {
        script.validate()?;
        let grid = GridLayout::new(script.rows, script.cols, script.width, script.height)
            .map_err(|e| SynthError::InvalidScript(e.to_string()))?;
        let styles = (0..script.participants.len())
            .map(|i| FaceStyle::for_identity(script.identity_of(i)))
            .collect();
        Ok(Self {
            script,
            grid,
            timeline: script.timeline()?,
            styles,
        })
    }

    pub fn grid(&self) -> &GridLayout {
        &self.grid
    }

    fn pose(&self, participant: usize, second: u64) -> Pose {
        if !self.script.motion {
            return Pose::NEUTRAL;
        }
        let v = mix(mix(self.script.seed ^ participant as u64) ^ second);
        Pose {
            dx: (v % 9) as i32 - 4,
            dy: ((v >> 8) % 9) as i32 - 4,
            scale: 0.95 + ((v >> 16) % 1001) as f32 / 10_000.0,
        }
    }

    /// The frame shown throughout `second`, with the truth for each
    /// occupied cell.
    pub fn frame_for_second(&self, second: u64) -> (RgbImage, Vec<CellTruth>) {
        let mut frame = RgbImage::from_pixel(self.script.width, self.script.height, face::EMPTY_CELL);
        let order = &self.timeline[second as usize];
        let mut cells = Vec::with_capacity(order.len());
        for (slot, name) in order.iter().enumerate() {
            let cell = self.grid.cell_at(slot).expect("timeline respects capacity");
            let rect = self.grid.cell_rect(cell).expect("cell in grid");
            let idx = self
                .script
                .participants
                .iter()
                .position(|p| &p.name == name)
                .expect("scripted participant");
            let visible = self.script.participants[idx].face_visible(second);
            let mut img = RgbImage::new(rect.w, rect.h);
            let face_box = face::render_person(&mut img, &self.styles[idx], self.pose(idx, second), visible);
            face::draw_name_label(&mut img, name);
            image::imageops::replace(&mut frame, &img, rect.x as i64, rect.y as i64);
            cells.push(CellTruth {
                cell,
                participant: name.clone(),
                face_visible: visible,
                face_box: face_box.map(|b| rect.offset_by(&b)),
            });
        }
        (frame, cells)
    }

    pub fn cell_rect(&self, cell: CellRef) -> PixelRect {
        self.grid.cell_rect(cell).expect("cell in grid")
    }
}

/// Render `script` to `video_path` (format from the extension, MP4 when
/// unknown) and return its ground truth.
pub fn generate_video(script: &SessionScript, video_path: &Path) -> Result<GroundTruth, SynthError> {
    let renderer = Renderer::new(script)?;
    let format = VideoFormat::from_path(video_path).unwrap_or(VideoFormat::Mp4);
    let fps = Fps::new(script.fps as f64).map_err(|e| SynthError::InvalidScript(e.to_string()))?;
    let mut writer = VideoWriter::create(
        video_path,
        format,
        script.width,
        script.height,
        fps,
        WriterOptions::default(),
    )?;
    let mut segments: Vec<Segment> = Vec::new();
    let per_s = script.fps as u64;
    for s in 0..script.duration_s {
        let (frame, cells) = renderer.frame_for_second(s);
        writer.write_repeated(&frame, per_s)?;
        // Merge runs whose occupancy is unchanged; face boxes jitter with
        // motion, so those only merge when motion is off.
        match segments.last_mut() {
            Some(last) if last.cells == cells => {
                last.end_s = s + 1;
                last.end_frame = (s + 1) * per_s;
            }
            _ => segments.push(Segment {
                start_frame: s * per_s,
                end_frame: (s + 1) * per_s,
                start_s: s,
                end_s: s + 1,
                cells,
            }),
        }
    }
    writer.finish()?;
    Ok(GroundTruth {
        schema_version: TRUTH_SCHEMA_VERSION,
        fps: script.fps,
        frame_count: script.frame_count(),
        duration_s: script.duration_s,
        width: script.width,
        height: script.height,
        rows: script.rows,
        cols: script.cols,
        participants: script.participants.iter().map(|p| p.name.clone()).collect(),
        segments,
    })
}

/// Paths written by [`write_bundle`].
#[derive(Debug, Clone)]
pub struct Bundle {
    pub video: PathBuf,
    pub ground_truth: PathBuf,
    pub roster: PathBuf,
    pub script: PathBuf,
    pub truth: GroundTruth,
}

/// Write `video.mp4`, `ground_truth.json`, `roster.csv` and `script.json`
/// into `out_dir`.
pub fn write_bundle(script: &SessionScript, out_dir: &Path) -> Result<Bundle, SynthError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let video = out_dir.join("video.mp4");
    let truth = generate_video(script, &video)?;
    let ground_truth = out_dir.join("ground_truth.json");
    truth.save(&ground_truth)?;
    let roster = out_dir.join("roster.csv");
    script
        .roster()?
        .write_csv(&roster)
        .map_err(|e| SynthError::InvalidScript(e.to_string()))?;
    let script_path = out_dir.join("script.json");
    std::fs::write(&script_path, serde_json::to_string_pretty(script)? + "\n").map_err(io(&script_path))?;
    Ok(Bundle {
        video,
        ground_truth,
        roster,
        script: script_path,
        truth,
    })
}
