use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use image::RgbImage;
use proctor_core::Fps;
use y4m::Colorspace;

use crate::color::{gray_to_rgb, yuv420_to_rgb};
use crate::error::{Result, VideoError};
use crate::stream::{FrameSource, VideoMeta};

pub(crate) struct Y4mSource {
    decoder: y4m::Decoder<BufReader<File>>,
    width: usize,
    height: usize,
    colorspace: Colorspace,
    produced: u64,
}

fn open_decoder(path: &Path) -> Result<y4m::Decoder<BufReader<File>>> {
    let file = File::open(path)?;
    y4m::decode(BufReader::new(file)).map_err(|e| VideoError::UnreadableVideo {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

impl Y4mSource {
    pub(crate) fn open(path: &Path, fallback_fps: Fps) -> Result<(VideoMeta, Self)> {
        let decoder = open_decoder(path)?;
        let colorspace = decoder.get_colorspace();
        let supported = matches!(
            colorspace,
            Colorspace::C420 | Colorspace::C420jpeg | Colorspace::C420paldv | Colorspace::C420mpeg2 | Colorspace::Cmono
        );
        if !supported {
            return Err(VideoError::UnreadableVideo {
                path: path.to_path_buf(),
                reason: format!("unsupported Y4M colorspace {colorspace:?}"),
            });
        }

        // Y4M has no frame index; count by a header-only pass over the file.
        let mut counter = open_decoder(path)?;
        let mut frame_count = 0u64;
        loop {
            match counter.read_frame() {
                Ok(_) => frame_count += 1,
                Err(y4m::Error::EOF) => break,
                Err(e) => {
                    return Err(VideoError::UnreadableVideo {
                        path: path.to_path_buf(),
                        reason: format!("corrupt frame {frame_count}: {e}"),
                    })
                }
            }
        }

        let rate = decoder.get_framerate();
        let container_fps = (rate.num > 0 && rate.den > 0)
            .then(|| Fps::new(rate.num as f64 / rate.den as f64).ok())
            .flatten();
        let fps = container_fps.unwrap_or(fallback_fps);
        let (width, height) = (decoder.get_width(), decoder.get_height());
        let meta = VideoMeta {
            path: path.to_path_buf(),
            fps,
            fps_from_container: container_fps.is_some(),
            frame_count,
            width: width as u32,
            height: height as u32,
            duration_s: frame_count as f64 / fps.get(),
        };
        Ok((
            meta,
            Self {
                decoder,
                width,
                height,
                colorspace,
                produced: 0,
            },
        ))
    }
}

impl FrameSource for Y4mSource {
    fn advance(&mut self, want_rgb: bool) -> Result<Option<Option<RgbImage>>> {
        let frame = match self.decoder.read_frame() {
            Ok(f) => f,
            Err(y4m::Error::EOF) => return Ok(None),
            Err(e) => {
                return Err(VideoError::Decode {
                    index: self.produced,
                    reason: e.to_string(),
                })
            }
        };
        self.produced += 1;
        if !want_rgb {
            return Ok(Some(None));
        }
        let img = if matches!(self.colorspace, Colorspace::Cmono) {
            gray_to_rgb(frame.get_y_plane(), self.width, self.height)
        } else {
            yuv420_to_rgb(
                frame.get_y_plane(),
                frame.get_u_plane(),
                frame.get_v_plane(),
                self.width,
                self.height,
                self.width.div_ceil(2),
            )
        };
        Ok(Some(Some(img)))
    }
}
