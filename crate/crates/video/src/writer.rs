use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::RgbImage;
use openh264::encoder::{
    BitRate, Encoder, EncoderConfig, FrameRate, IntraFramePeriod, QpRange, RateControlMode, UsageType,
};
use openh264::formats::{RgbSliceU8, YUVBuffer};
use openh264::OpenH264API;
use proctor_core::Fps;

use crate::color::rgb_to_yuv420;
use crate::error::{Result, VideoError};

const MP4_TIMESCALE: u32 = 90_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VideoFormat {
    /// H.264 in an MP4 container.
    Mp4,
    /// Uncompressed 4:2:0 YUV4MPEG2.
    Y4m,
}

impl VideoFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "mp4" | "m4v" => Some(Self::Mp4),
            "y4m" => Some(Self::Y4m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WriterOptions {
    pub bitrate_bps: u32,
    /// H.264 quantizer bounds (0 best, 51 worst).
    pub qp_min: u8,
    pub qp_max: u8,
    /// Frames between IDR frames; 0 lets the encoder decide.
    pub keyframe_interval: u32,
}

impl Default for WriterOptions {
    fn default() -> Self {
        Self {
            bitrate_bps: 8_000_000,
            qp_min: 12,
            qp_max: 30,
            keyframe_interval: 0,
        }
    }
}

enum Sink {
    Mp4 {
        out: Option<BufWriter<File>>,
        writer: Option<mp4::Mp4Writer<BufWriter<File>>>,
        encoder: Box<Encoder>,
        sample_duration: u32,
    },
    Y4m(y4m::Encoder<BufWriter<File>>),
}

pub struct VideoWriter {
    sink: Sink,
    width: u32,
    height: u32,
    frames: u64,
}

fn strip_start_code(nal: &[u8]) -> &[u8] {
    let zeros = nal.iter().take_while(|&&b| b == 0).count();
    if zeros >= 2 && nal.get(zeros) == Some(&1) {
        &nal[zeros + 1..]
    } else {
        nal
    }
}

fn enc_err(e: impl std::fmt::Display) -> VideoError {
    VideoError::Encode(e.to_string())
}

impl VideoWriter {
    pub fn create(
        path: &Path,
        format: VideoFormat,
        width: u32,
        height: u32,
        fps: Fps,
        options: WriterOptions,
    ) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 == 1 || height % 2 == 1 {
            return Err(VideoError::Encode(format!(
                "frame size must be even and non-zero, got {width}x{height}"
            )));
        }
        let out = BufWriter::new(File::create(path)?);
        let sink = match format {
            VideoFormat::Mp4 => {
                let mut cfg = EncoderConfig::new()
                    .bitrate(BitRate::from_bps(options.bitrate_bps))
                    .max_frame_rate(FrameRate::from_hz(fps.get() as f32))
                    .rate_control_mode(RateControlMode::Quality)
                    .qp(QpRange::new(options.qp_min, options.qp_max))
                    .usage_type(UsageType::CameraVideoRealTime)
                    .skip_frames(false);
                if options.keyframe_interval > 0 {
                    cfg = cfg.intra_frame_period(IntraFramePeriod::from_num_frames(options.keyframe_interval));
                }
                let encoder = Encoder::with_api_config(OpenH264API::from_source(), cfg).map_err(enc_err)?;
                Sink::Mp4 {
                    out: Some(out),
                    writer: None,
                    encoder: Box::new(encoder),
                    sample_duration: (MP4_TIMESCALE as f64 / fps.get()).round().max(1.0) as u32,
                }
            }
            VideoFormat::Y4m => {
                let rate = if fps.get().fract() == 0.0 {
                    y4m::Ratio::new(fps.get() as usize, 1)
                } else {
                    y4m::Ratio::new((fps.get() * 1000.0).round() as usize, 1000)
                };
                let enc = y4m::encode(width as usize, height as usize, rate)
                    .with_colorspace(y4m::Colorspace::C420jpeg)
                    .write_header(out)
                    .map_err(enc_err)?;
                Sink::Y4m(enc)
            }
        };
        Ok(Self {
            sink,
            width,
            height,
            frames: 0,
        })
    }

    pub fn frames_written(&self) -> u64 {
        self.frames
    }

    pub fn write_frame(&mut self, frame: &RgbImage) -> Result<()> {
        self.write_repeated(frame, 1)
    }

    /// Append `count` copies of `frame`, converting its colors only once.
    pub fn write_repeated(&mut self, frame: &RgbImage, count: u64) -> Result<()> {
        if frame.dimensions() != (self.width, self.height) {
            return Err(VideoError::FrameSize {
                got_w: frame.width(),
                got_h: frame.height(),
                want_w: self.width,
                want_h: self.height,
            });
        }
        let (w, h) = (self.width as usize, self.height as usize);
        match &mut self.sink {
            Sink::Y4m(enc) => {
                let (y, u, v) = rgb_to_yuv420(frame);
                for _ in 0..count {
                    enc.write_frame(&y4m::Frame::new([&y, &u, &v], None)).map_err(enc_err)?;
                    self.frames += 1;
                }
            }
            Sink::Mp4 { .. } => {
                let yuv = YUVBuffer::from_rgb_source(RgbSliceU8::new(frame.as_raw(), (w, h)));
                for _ in 0..count {
                    self.encode_mp4(&yuv)?;
                    self.frames += 1;
                }
            }
        }
        Ok(())
    }

    fn encode_mp4(&mut self, yuv: &YUVBuffer) -> Result<()> {
        let Sink::Mp4 {
            out,
            writer,
            encoder,
            sample_duration,
        } = &mut self.sink
        else {
            unreachable!("only called for MP4 sinks");
        };
        let stream = encoder.encode(yuv).map_err(enc_err)?;
        let mut sps = None;
        let mut pps = None;
        let mut sample = Vec::new();
        let mut is_sync = false;
        for l in 0..stream.num_layers() {
            let layer = stream.layer(l).expect("layer index in range");
            for n in 0..layer.nal_count() {
                let nal = strip_start_code(layer.nal_unit(n).expect("nal index in range"));
                match nal.first().map(|b| b & 0x1f) {
                    Some(7) => sps = Some(nal.to_vec()),
                    Some(8) => pps = Some(nal.to_vec()),
                    Some(t) => {
                        is_sync |= t == 5;
                        sample.extend_from_slice(&(nal.len() as u32).to_be_bytes());
                        sample.extend_from_slice(nal);
                    }
                    None => {}
                }
            }
        }
        if sample.is_empty() {
            return Err(VideoError::Encode(format!("encoder dropped frame {}", self.frames)));
        }
        if writer.is_none() {
            let (Some(sps), Some(pps)) = (sps, pps) else {
                return Err(VideoError::Encode(
                    "first encoded frame carried no parameter sets".into(),
                ));
            };
            *writer = Some(start_mp4(
                out.take().expect("output consumed once"),
                self.width,
                self.height,
                sps,
                pps,
            )?);
        }
        writer
            .as_mut()
            .expect("initialized above")
            .write_sample(
                1,
                &mp4::Mp4Sample {
                    start_time: self.frames * *sample_duration as u64,
                    duration: *sample_duration,
                    rendering_offset: 0,
                    is_sync,
                    bytes: sample.into(),
                },
            )
            .map_err(enc_err)?;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        match self.sink {
            Sink::Y4m(enc) => {
                // y4m::Encoder owns the writer; dropping it flushes the BufWriter.
                drop(enc);
            }
            Sink::Mp4 {
                mut out,
                writer,
                mut encoder,
                ..
            } => {
                let mut writer = match writer {
                    Some(w) => w,
                    None => {
                        // No frames: encode a throwaway frame for the parameter sets.
                        let blank = YUVBuffer::new(self.width as usize, self.height as usize);
                        let stream = encoder.encode(&blank).map_err(enc_err)?;
                        let (mut sps, mut pps) = (Vec::new(), Vec::new());
                        for l in 0..stream.num_layers() {
                            let layer = stream.layer(l).expect("layer index in range");
                            for n in 0..layer.nal_count() {
                                let nal = strip_start_code(layer.nal_unit(n).expect("nal"));
                                match nal.first().map(|b| b & 0x1f) {
                                    Some(7) => sps = nal.to_vec(),
                                    Some(8) => pps = nal.to_vec(),
                                    _ => {}
                                }
                            }
                        }
                        start_mp4(out.take().expect("output unused"), self.width, self.height, sps, pps)?
                    }
                };
                writer.write_end().map_err(enc_err)?;
                writer.into_writer().flush()?;
            }
        }
        Ok(())
    }
}

fn start_mp4(
    out: BufWriter<File>,
    width: u32,
    height: u32,
    sps: Vec<u8>,
    pps: Vec<u8>,
) -> Result<mp4::Mp4Writer<BufWriter<File>>> {
    let brand = |s: &str| s.parse::<mp4::FourCC>().expect("valid fourcc");
    let config = mp4::Mp4Config {
        major_brand: brand("isom"),
        minor_version: 512,
        compatible_brands: vec![brand("isom"), brand("iso2"), brand("avc1"), brand("mp41")],
        timescale: 1000,
    };
    let mut writer = mp4::Mp4Writer::write_start(out, &config).map_err(enc_err)?;
    writer
        .add_track(&mp4::TrackConfig {
            track_type: mp4::TrackType::Video,
            timescale: MP4_TIMESCALE,
            language: "und".into(),
            media_conf: mp4::MediaConfig::AvcConfig(mp4::AvcConfig {
                width: width as u16,
                height: height as u16,
                seq_param_set: sps,
                pic_param_set: pps,
            }),
        })
        .map_err(enc_err)?;
    Ok(writer)
}
