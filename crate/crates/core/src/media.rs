//! File formats: WAV audio, Y4M video and PNG frames.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use audioadapter_buffers::direct::InterleavedSlice;
use rubato::{Fft, FixedSync, Resampler};

use crate::error::{Error, Result};
use crate::video::Video8;

/// Mono waveform with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Audio {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Band-limited conversion to `rate`. Output length is `ceil(len * rate / sample_rate)`.
    pub fn resample(&self, rate: u32) -> Result<Audio> {
        if rate == self.sample_rate || self.samples.is_empty() {
            return Ok(Audio::new(self.samples.clone(), rate));
        }
        let mut resampler = Fft::<f32>::new(self.sample_rate as usize, rate as usize, 1024, 1, FixedSync::Input)
            .map_err(|e| Error::InvalidInput(format!("resampler: {e}")))?;
        let input = InterleavedSlice::new(&self.samples, 1, self.samples.len())
            .map_err(|e| Error::InvalidInput(format!("resampler input: {e}")))?;
        let out = resampler
            .process_all(&input, self.samples.len(), None)
            .map_err(|e| Error::InvalidInput(format!("resampling failed: {e}")))?;
        Ok(Audio::new(out.take_data(), rate))
    }

    /// Truncate or zero-pad to exactly `len` samples.
    pub fn fit_to(&mut self, len: usize) {
        self.samples.resize(len, 0.0);
    }
}

/// Reads any PCM or float WAV, mixing channels down to mono.
pub fn read_wav(path: &Path) -> Result<Audio> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => {
            reader.samples::<f32>().collect::<std::result::Result<_, _>>().map_err(|e| wav_err(path, e))?
        }
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_err(path, e))?
        }
    };
    let samples = interleaved.chunks(channels).map(|c| c.iter().sum::<f32>() / channels as f32).collect();
    Ok(Audio::new(samples, spec.sample_rate))
}

/// Writes 16-bit PCM mono.
pub fn write_wav(path: &Path, audio: &Audio) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in &audio.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

/// Decoded Y4M stream.
pub struct Y4mVideo {
    pub video: Video8,
    pub fps: f64,
}

pub fn read_y4m(path: &Path) -> Result<Y4mVideo> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = y4m::decode(BufReader::new(file)).map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (dec.get_width(), dec.get_height());
    let rate = dec.get_framerate();
    if rate.den == 0 || rate.num == 0 {
        return Err(Error::format(path, "zero frame rate"));
    }
    let fps = rate.num as f64 / rate.den as f64;
    let (sx, sy) = match dec.get_colorspace() {
        y4m::Colorspace::C420 | y4m::Colorspace::C420jpeg | y4m::Colorspace::C420paldv | y4m::Colorspace::C420mpeg2 => {
            (2, 2)
        }
        y4m::Colorspace::C422 => (2, 1),
        y4m::Colorspace::C444 => (1, 1),
        y4m::Colorspace::Cmono => (0, 0),
        other => return Err(Error::format(path, format!("unsupported colorspace {other:?}"))),
    };
    let mut data = Vec::new();
    let mut frames = 0;
    loop {
        match dec.read_frame() {
            Ok(frame) => {
                let y = frame.get_y_plane();
                let (u, v) = (frame.get_u_plane(), frame.get_v_plane());
                let cw = if sx == 0 { 0 } else { w.div_ceil(sx) };
                for row in 0..h {
                    for col in 0..w {
                        let luma = y[row * w + col] as f32;
                        let (cb, cr) = if sx == 0 {
                            (128.0, 128.0)
                        } else {
                            let ci = (row / sy) * cw + col / sx;
                            (u[ci] as f32, v[ci] as f32)
                        };
                        data.extend_from_slice(&ycbcr_to_rgb(luma, cb, cr));
                    }
                }
                frames += 1;
            }
            Err(y4m::Error::EOF) => break,
            Err(e) => return Err(Error::format(path, e.to_string())),
        }
    }
    if frames == 0 {
        return Err(Error::format(path, "no frames"));
    }
    Ok(Y4mVideo { video: Video8::new(frames, h, w, data)?, fps })
}

/// Writes 4:2:0 full-range (JFIF) Y4M, the most widely accepted raw layout.
pub fn write_y4m(path: &Path, video: &Video8, fps: u32) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let (w, h) = (video.width, video.height);
    let mut enc = y4m::encode(w, h, y4m::Ratio::new(fps as usize, 1))
        .with_colorspace(y4m::Colorspace::C420jpeg)
        .write_header(BufWriter::new(file))
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    for t in 0..video.frames {
        let rgb = video.frame(t);
        let mut y = vec![0u8; w * h];
        let mut u = vec![0f32; cw * ch];
        let mut v = vec![0f32; cw * ch];
        let mut n = vec![0f32; cw * ch];
        for row in 0..h {
            for col in 0..w {
                let p = &rgb[(row * w + col) * 3..][..3];
                let (ly, cb, cr) = rgb_to_ycbcr(p[0] as f32, p[1] as f32, p[2] as f32);
                y[row * w + col] = ly.round().clamp(0.0, 255.0) as u8;
                let ci = (row / 2) * cw + col / 2;
                u[ci] += cb;
                v[ci] += cr;
                n[ci] += 1.0;
            }
        }
        let to_u8 = |plane: Vec<f32>| -> Vec<u8> {
            plane.iter().zip(&n).map(|(s, c)| (s / c).round().clamp(0.0, 255.0) as u8).collect()
        };
        let (u, v) = (to_u8(u), to_u8(v));
        enc.write_frame(&y4m::Frame::new([&y, &u, &v], None)).map_err(|e| Error::format(path, e.to_string()))?;
    }
    Ok(())
}

fn rgb_to_ycbcr(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    (y, cb, cr)
}

fn ycbcr_to_rgb(y: f32, cb: f32, cr: f32) -> [u8; 3] {
    let (cb, cr) = (cb - 128.0, cr - 128.0);
    let r = y + 1.402 * cr;
    let g = y - 0.344_136 * cb - 0.714_136 * cr;
    let b = y + 1.772 * cb;
    [r, g, b].map(|c| c.round().clamp(0.0, 255.0) as u8)
}

pub fn read_png(path: &Path) -> Result<Video8> {
    let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?.to_rgb8();
    let (w, h) = img.dimensions();
    Video8::new(1, h as usize, w as usize, img.into_raw())
}

pub fn write_png(path: &Path, video: &Video8, t: usize) -> Result<()> {
    image::save_buffer(path, video.frame(t), video.width as u32, video.height as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Writes every frame as `{dir}/{index:05}.png`.
pub fn write_png_frames(dir: &Path, video: &Video8) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in 0..video.frames {
        write_png(&dir.join(format!("{t:05}.png")), video, t)?;
    }
    Ok(())
}

/// Reads a directory of equally sized PNG frames in file-name order.
pub fn read_png_frames(dir: &Path) -> Result<Video8> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::format(dir, "no PNG frames"));
    }
    let mut data = Vec::new();
    let first = read_png(&paths[0])?;
    for p in &paths {
        let f = read_png(p)?;
        if f.height != first.height || f.width != first.width {
            return Err(Error::format(p, "frame size differs from first frame"));
        }
        data.extend_from_slice(&f.data);
    }
    Video8::new(paths.len(), first.height, first.width, data)
}

/// Bilinear resize of every frame.
pub fn resize(video: &Video8, height: usize, width: usize) -> Video8 {
    let mut data = Vec::with_capacity(video.frames * height * width * 3);
    for t in 0..video.frames {
        let img = image::RgbImage::from_raw(video.width as u32, video.height as u32, video.frame(t).to_vec())
            .expect("frame buffer matches dimensions");
        let out = image::imageops::resize(&img, width as u32, height as u32, image::imageops::FilterType::Triangle);
        data.extend_from_slice(out.as_raw());
    }
    Video8 { frames: video.frames, height, width, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f32> = (0..800).map(|i| ((i as f32) * 0.05).sin() * 0.5).collect();
        write_wav(&path, &Audio::new(samples.clone(), 8000)).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 8000);
        assert_eq!(back.samples.len(), 800);
        for (a, b) in samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 16000.0);
        }
    }

    #[test]
    fn resample_lengths() {
        let a = Audio::new(vec![0.0; 132_300], 44_100);
        assert_eq!(a.resample(8000).unwrap().samples.len(), 24_000);
        let b = Audio::new(vec![0.0; 48_000], 48_000);
        assert_eq!(b.resample(8000).unwrap().samples.len(), 8000);
    }

    #[test]
    fn resample_preserves_low_tone() {
        let f = 200.0f32;
        let n = 44_100;
        let a = Audio::new((0..n).map(|i| (std::f32::consts::TAU * f * i as f32 / 44_100.0).sin()).collect(), 44_100);
        let r = a.resample(8000).unwrap();
        // Compare in the interior, away from edge transients.
        for i in 1000..7000 {
            let expect = (std::f32::consts::TAU * f * i as f32 / 8000.0).sin();
            assert!((r.samples[i] - expect).abs() < 0.02, "sample {i}");
        }
    }

    #[test]
    fn y4m_round_trip_is_close() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.y4m");
        let mut v = Video8::filled(3, 8, 6, 0);
        for (i, px) in v.data.iter_mut().enumerate() {
            // Smooth content so 4:2:0 chroma subsampling is nearly lossless.
            *px = (100 + (i / 3 % 6) * 4 + (i % 3) * 20) as u8;
        }
        write_y4m(&path, &v, 25).unwrap();
        let back = read_y4m(&path).unwrap();
        assert_eq!(back.fps, 25.0);
        assert!(back.video.same_shape(&v));
        let max_err = v.data.iter().zip(&back.video.data).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
        assert!(max_err <= 8, "{max_err}");
    }

    #[test]
    fn png_frames_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = Video8::new(2, 3, 4, (0..72).map(|i| i as u8 * 3).collect()).unwrap();
        write_png_frames(dir.path(), &v).unwrap();
        assert_eq!(read_png_frames(dir.path()).unwrap(), v);
    }
}
