use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Frames per second; always finite and strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Fps(f64);

impl Fps {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(CoreError::InvalidConfig(format!("fps must be > 0, got {value}")))
        }
    }

    pub const fn get(self) -> f64 {
        self.0
    }

    /// Index of the first frame whose timestamp is at or after `second`.
    pub fn first_frame_of_second(self, second: u64) -> u64 {
        (second as f64 * self.0).ceil() as u64
    }

    /// Number of (possibly partial) seconds spanned by `frame_count` frames.
    pub fn seconds_spanned(self, frame_count: u64) -> u64 {
        if frame_count == 0 {
            0
        } else {
            second_of_frame(frame_count - 1, self) + 1
        }
    }
}

impl TryFrom<f64> for Fps {
    type Error = CoreError;

    fn try_from(value: f64) -> Result<Self> {
        Fps::new(value)
    }
}

impl From<Fps> for f64 {
    fn from(fps: Fps) -> f64 {
        fps.0
    }
}

/// `floor(frame_idx / fps)`.
pub fn second_of_frame(frame_idx: u64, fps: Fps) -> u64 {
    let s = (frame_idx as f64 / fps.0).floor() as u64;
    // Guard against the quotient landing a hair below an integer.
    if fps.first_frame_of_second(s + 1) <= frame_idx {
        s + 1
    } else {
        s
    }
}
