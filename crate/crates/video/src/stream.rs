use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use image::RgbImage;
use proctor_core::{second_of_frame, Fps};

use crate::error::{Result, VideoError};
use crate::mp4_source::Mp4Source;
use crate::y4m_source::Y4mSource;

#[derive(Debug, Clone, PartialEq)]
pub struct VideoMeta {
    pub path: PathBuf,
    pub fps: Fps,
    /// False when the container carried no usable rate and `fps` is the fallback.
    pub fps_from_container: bool,
    pub frame_count: u64,
    pub width: u32,
    pub height: u32,
    pub duration_s: f64,
}

impl VideoMeta {
    /// Number of (possibly partial) seconds covered by the frames.
    pub fn seconds(&self) -> u64 {
        self.fps.seconds_spanned(self.frame_count)
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub index: u64,
    pub image: RgbImage,
    pub timestamp_s: f64,
}

/// Which decoded frames a stream hands out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    All,
    /// Frames whose index is a multiple of `n`.
    EveryNth(u64),
    /// The first frame of every second of video.
    FirstOfSecond,
}

/// Container-specific decoder; yields frames strictly in decode order.
pub(crate) trait FrameSource: Send {
    /// Decode the next frame. `Ok(None)` at end of stream; the inner option
    /// is `None` when `want_rgb` was false.
    fn advance(&mut self, want_rgb: bool) -> Result<Option<Option<RgbImage>>>;
}

/// Single-consumer, lazily decoded sequence of frames.
pub struct FrameStream {
    source: Box<dyn FrameSource>,
    fps: Fps,
    next_index: u64,
    selection: Selection,
    done: bool,
}

impl std::fmt::Debug for FrameStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameStream")
            .field("fps", &self.fps)
            .field("next_index", &self.next_index)
            .field("selection", &self.selection)
            .finish_non_exhaustive()
    }
}

impl FrameStream {
    pub fn select(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self
    }

    /// Keep only frames with `index % n == 0`.
    pub fn sample_every(self, n: u64) -> Self {
        self.select(Selection::EveryNth(n.max(1)))
    }

    pub fn per_second(self) -> Self {
        self.select(Selection::FirstOfSecond)
    }

    fn wanted(&self, index: u64) -> bool {
        match self.selection {
            Selection::All => true,
            Selection::EveryNth(n) => index % n == 0,
            Selection::FirstOfSecond => {
                index == 0 || second_of_frame(index, self.fps) != second_of_frame(index - 1, self.fps)
            }
        }
    }
}

impl Iterator for FrameStream {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let index = self.next_index;
            let want = self.wanted(index);
            match self.source.advance(want) {
                Ok(None) => self.done = true,
                Ok(Some(img)) => {
                    self.next_index += 1;
                    if let Some(image) = img.filter(|_| want) {
                        return Some(Ok(Frame {
                            index,
                            image,
                            timestamp_s: index as f64 / self.fps.get(),
                        }));
                    }
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}

/// Sub-stream of frames whose index is a multiple of `every_n`.
pub fn sample_frames(stream: FrameStream, every_n: u64) -> FrameStream {
    stream.sample_every(every_n)
}

enum Container {
    Mp4,
    Y4m,
}

fn sniff(path: &Path) -> Result<Container> {
    let unreadable = |reason: String| VideoError::UnreadableVideo {
        path: path.to_path_buf(),
        reason,
    };
    let mut head = [0u8; 12];
    let mut f = File::open(path).map_err(|e| unreadable(e.to_string()))?;
    let n = f.read(&mut head).map_err(|e| unreadable(e.to_string()))?;
    if n >= 9 && &head[..9] == b"YUV4MPEG2" {
        Ok(Container::Y4m)
    } else if n >= 8 && &head[4..8] == b"ftyp" {
        Ok(Container::Mp4)
    } else {
        Err(unreadable("unrecognized container (expected MP4 or Y4M)".into()))
    }
}

/// Open a recording. `fallback_fps` is used when the container has no rate.
pub fn open_video(path: &Path, fallback_fps: Fps) -> Result<(VideoMeta, FrameStream)> {
    let (meta, source): (VideoMeta, Box<dyn FrameSource>) = match sniff(path)? {
        Container::Mp4 => {
            let (meta, src) = Mp4Source::open(path, fallback_fps)?;
            (meta, Box::new(src))
        }
        Container::Y4m => {
            let (meta, src) = Y4mSource::open(path, fallback_fps)?;
            (meta, Box::new(src))
        }
    };
    if meta.frame_count == 0 {
        return Err(VideoError::EmptyVideo {
            path: path.to_path_buf(),
        });
    }
    let stream = FrameStream {
        source,
        fps: meta.fps,
        next_index: 0,
        selection: Selection::All,
        done: false,
    };
    Ok((meta, stream))
}
