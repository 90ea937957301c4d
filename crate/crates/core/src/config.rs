use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Parameters of the presence analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Used when the container does not report a frame rate.
    pub fps_assumed: f64,
    /// Presence window length in seconds.
    pub window_s: u32,
    /// A window is "present" when the accepted count is strictly greater.
    pub presence_min_count: u32,
    /// Minimum top-class softmax probability for a recognition to count.
    pub accept_threshold: f64,
    pub rows: u32,
    pub cols: u32,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            fps_assumed: 30.0,
            window_s: 30,
            presence_min_count: 10,
            accept_threshold: 0.5,
            rows: 5,
            cols: 5,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::InvalidConfig(msg));
        if !(self.fps_assumed.is_finite() && self.fps_assumed > 0.0) {
            return bad(format!("fps_assumed must be > 0, got {}", self.fps_assumed));
        }
        if self.window_s < 1 {
            return bad("window_s must be >= 1".into());
        }
        if self.presence_min_count >= self.window_s {
            return bad(format!(
                "presence_min_count ({}) must be below window_s ({}) or no window can be present",
                self.presence_min_count, self.window_s
            ));
        }
        if !(0.0..=1.0).contains(&self.accept_threshold) {
            return bad(format!(
                "accept_threshold must be within [0,1], got {}",
                self.accept_threshold
            ));
        }
        if self.rows == 0 || self.cols == 0 {
            return bad("grid rows and cols must be positive".into());
        }
        Ok(())
    }
}
