use std::path::Path;

use proctor_core::{CellRef, PixelRect};
use serde::{Deserialize, Serialize};

use crate::SynthError;

pub const TRUTH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub cell: CellRef,
    pub participant: String,
    pub face_visible: bool,
    /// Face oval bounds in frame coordinates.
    pub face_box: Option<PixelRect>,
}

/// A run of frames whose gallery content does not change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: u64,
    /// Exclusive.
    pub end_frame: u64,
    pub start_s: u64,
    pub end_s: u64,
    pub cells: Vec<CellTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub fps: u32,
    pub frame_count: u64,
    pub duration_s: u64,
    pub width: u32,
    pub height: u32,
    pub rows: u32,
    pub cols: u32,
    pub participants: Vec<String>,
    pub segments: Vec<Segment>,
}

impl GroundTruth {
    pub fn segment_at_frame(&self, frame: u64) -> Option<&Segment> {
        self.segments
            .iter()
            .find(|s| (s.start_frame..s.end_frame).contains(&frame))
    }

    pub fn segment_at(&self, second: u64) -> Option<&Segment> {
        self.segments.iter().find(|s| (s.start_s..s.end_s).contains(&second))
    }

    pub fn cell_at(&self, second: u64, cell: CellRef) -> Option<&CellTruth> {
        self.segment_at(second)?.cells.iter().find(|c| c.cell == cell)
    }

    pub fn cell_of(&self, second: u64, participant: &str) -> Option<&CellTruth> {
        self.segment_at(second)?
            .cells
            .iter()
            .find(|c| c.participant == participant)
    }

    pub fn face_visible(&self, participant: &str, second: u64) -> bool {
        self.cell_of(second, participant).is_some_and(|c| c.face_visible)
    }

    /// Seconds in which the participant's face is on screen.
    pub fn visible_seconds(&self, participant: &str) -> u64 {
        self.segments
            .iter()
            .filter(|s| s.cells.iter().any(|c| c.participant == participant && c.face_visible))
            .map(|s| s.end_s - s.start_s)
            .sum()
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|source| SynthError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}
