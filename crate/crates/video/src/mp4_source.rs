use std::collections::VecDeque;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use image::RgbImage;
use openh264::decoder::{DecodedYUV, Decoder, DecoderConfig, Flush};
use openh264::formats::YUVSource;
use openh264::OpenH264API;
use proctor_core::Fps;

use crate::error::{Result, VideoError};
use crate::stream::{FrameSource, VideoMeta};

const START_CODE: [u8; 4] = [0, 0, 0, 1];

pub(crate) struct Mp4Source {
    reader: mp4::Mp4Reader<BufReader<File>>,
    track_id: u32,
    next_sample: u32,
    sample_count: u32,
    length_size: usize,
    parameter_sets: Vec<u8>,
    decoder: Decoder,
    packet: Vec<u8>,
    flushed: VecDeque<RgbImage>,
    drained: bool,
    produced: u64,
}

fn to_rgb(yuv: &DecodedYUV<'_>) -> RgbImage {
    let (w, h) = yuv.dimensions();
    let mut buf = vec![0u8; w * h * 3];
    yuv.write_rgb8(&mut buf);
    RgbImage::from_raw(w as u32, h as u32, buf).expect("buffer sized from decoder dimensions")
}

impl Mp4Source {
    pub(crate) fn open(path: &Path, fallback_fps: Fps) -> Result<(VideoMeta, Self)> {
        let unreadable = |reason: String| VideoError::UnreadableVideo {
            path: path.to_path_buf(),
            reason,
        };
        let file = File::open(path).map_err(|e| unreadable(e.to_string()))?;
        let size = file.metadata().map_err(|e| unreadable(e.to_string()))?.len();
        let reader = mp4::Mp4Reader::read_header(BufReader::new(file), size).map_err(|e| unreadable(e.to_string()))?;

        let track = reader
            .tracks()
            .values()
            .find(|t| matches!(t.media_type(), Ok(mp4::MediaType::H264)))
            .ok_or_else(|| unreadable("no H.264 video track".into()))?;
        let track_id = track.track_id();
        let sample_count = track.sample_count();
        let (width, height) = (track.width() as u32, track.height() as u32);

        let avc1 = track
            .trak
            .mdia
            .minf
            .stbl
            .stsd
            .avc1
            .as_ref()
            .ok_or_else(|| unreadable("missing avc1 sample description".into()))?;
        let length_size = (avc1.avcc.length_size_minus_one & 0x3) as usize + 1;
        let mut parameter_sets = Vec::new();
        for nal in avc1
            .avcc
            .sequence_parameter_sets
            .iter()
            .chain(avc1.avcc.picture_parameter_sets.iter())
        {
            parameter_sets.extend_from_slice(&START_CODE);
            parameter_sets.extend_from_slice(&nal.bytes);
        }

        let timescale = track.trak.mdia.mdhd.timescale as f64;
        let stts = &track.trak.mdia.minf.stbl.stts.entries;
        let total_ticks: u64 = stts.iter().map(|e| e.sample_count as u64 * e.sample_delta as u64).sum();
        let container_fps = if total_ticks > 0 && timescale > 0.0 {
            Fps::new(sample_count as f64 * timescale / total_ticks as f64).ok()
        } else {
            None
        };
        let fps = container_fps.unwrap_or(fallback_fps);

        let decoder = Decoder::with_api_config(
            OpenH264API::from_source(),
            DecoderConfig::new().flush_after_decode(Flush::NoFlush),
        )
        .map_err(|e| unreadable(format!("H.264 decoder init failed: {e}")))?;

        let meta = VideoMeta {
            path: path.to_path_buf(),
            fps,
            fps_from_container: container_fps.is_some(),
            frame_count: sample_count as u64,
            width,
            height,
            duration_s: sample_count as f64 / fps.get(),
        };
        Ok((
            meta,
            Self {
                reader,
                track_id,
                next_sample: 1,
                sample_count,
                length_size,
                parameter_sets,
                decoder,
                packet: Vec::new(),
                flushed: VecDeque::new(),
                drained: false,
                produced: 0,
            },
        ))
    }

    /// Rewrite a length-prefixed sample as an Annex-B packet.
    fn build_packet(&mut self, sample: &[u8], first: bool) -> Result<()> {
        self.packet.clear();
        if first {
            self.packet.extend_from_slice(&self.parameter_sets);
        }
        let mut pos = 0;
        while pos + self.length_size <= sample.len() {
            let len = sample[pos..pos + self.length_size]
                .iter()
                .fold(0usize, |acc, &b| (acc << 8) | b as usize);
            pos += self.length_size;
            let end = pos + len;
            if end > sample.len() {
                return Err(VideoError::Decode {
                    index: self.produced,
                    reason: "truncated NAL unit".into(),
                });
            }
            self.packet.extend_from_slice(&START_CODE);
            self.packet.extend_from_slice(&sample[pos..end]);
            pos = end;
        }
        Ok(())
    }
}

impl FrameSource for Mp4Source {
    fn advance(&mut self, want_rgb: bool) -> Result<Option<Option<RgbImage>>> {
        loop {
            if let Some(img) = self.flushed.pop_front() {
                self.produced += 1;
                return Ok(Some(Some(img)));
            }
            if self.next_sample > self.sample_count {
                if self.drained {
                    return Ok(None);
                }
                self.drained = true;
                let rest = self.decoder.flush_remaining().map_err(|e| VideoError::Decode {
                    index: self.produced,
                    reason: e.to_string(),
                })?;
                self.flushed.extend(rest.iter().map(to_rgb));
                continue;
            }

            let sample_id = self.next_sample;
            self.next_sample += 1;
            let sample = self
                .reader
                .read_sample(self.track_id, sample_id)
                .map_err(|e| VideoError::Decode {
                    index: self.produced,
                    reason: e.to_string(),
                })?;
            let Some(sample) = sample else {
                continue;
            };
            self.build_packet(&sample.bytes, sample_id == 1)?;
            let decoded = self.decoder.decode(&self.packet).map_err(|e| VideoError::Decode {
                index: self.produced,
                reason: e.to_string(),
            })?;
            if let Some(yuv) = decoded {
                let img = want_rgb.then(|| to_rgb(&yuv));
                self.produced += 1;
                return Ok(Some(img));
            }
        }
    }
}
