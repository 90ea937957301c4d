//! Shared domain model for gallery-view exam recordings.
//!
//! Everything here is pure: grid geometry, roster handling, frame/second
//! arithmetic and the windowed presence analytics that turn per-second
//! recognition events into presence verdicts and absence intervals.

pub mod config;
pub mod error;
pub mod grid;
pub mod presence;
pub mod roster;
pub mod time;

pub use config::AnalysisConfig;
pub use error::{CoreError, Result};
pub use grid::{CellRef, GridLayout, PixelRect};
pub use presence::{
    absence_intervals, consecutive_summary, read_events_csv, window_count, window_presence, write_events_csv,
    AbsenceInterval, PresenceWindow, RecognitionEvent, StudentSummary,
};
pub use roster::{normalize_name, Roster, StudentRecord};
pub use time::{second_of_frame, Fps};
