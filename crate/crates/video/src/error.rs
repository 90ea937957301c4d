use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VideoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("unreadable video {path}: {reason}")]
    UnreadableVideo { path: PathBuf, reason: String },

    #[error("video {path} contains no frames")]
    EmptyVideo { path: PathBuf },

    #[error("failed to decode frame {index}: {reason}")]
    Decode { index: u64, reason: String },

    #[error("failed to encode video: {0}")]
    Encode(String),

    #[error("frame is {got_w}x{got_h}, writer expects {want_w}x{want_h}")]
    FrameSize {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
