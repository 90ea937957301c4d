//! Video ingest for gallery recordings.
//!
//! [`open_video`] sniffs the container (MP4 with an H.264 track, or Y4M) and
//! returns the stream metadata plus a lazily decoded [`FrameStream`]. Frames
//! are decoded one at a time; frames the caller did not select are decoded
//! (inter-frame codecs need them) but never converted to RGB.
//!
//! [`VideoWriter`] produces the same two formats and is what the synthetic
//! generator uses.

mod color;
mod error;
mod mp4_source;
mod stream;
mod writer;
mod y4m_source;

pub use error::{Result, VideoError};
pub use stream::{open_video, sample_frames, Frame, FrameStream, Selection, VideoMeta};
pub use writer::{VideoFormat, VideoWriter, WriterOptions};
