//! Frame containers and conversions between 8-bit pixels and normalized tensors.
//!
//! Host-side frames are stored interleaved (`T×H×W×3`, RGB). Network tensors use
//! the `[T, 3, H, W]` layout with values in `[-1, 1]`.

use tch::{Device, Kind, Tensor};

use crate::error::{Error, Result};

/// Side length of generated and aligned frames.
pub const FRAME_SIZE: usize = 128;
pub const VIDEO_FPS: u32 = 25;
pub const AUDIO_RATE: u32 = 8000;
/// Audio samples per video frame (8000 / 25).
pub const SAMPLES_PER_FRAME: usize = (AUDIO_RATE / VIDEO_FPS) as usize;

/// A sequence of 8-bit RGB frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Video8 {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Video8 {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != frames * height * width * 3 {
            return Err(Error::Shape(format!("{} bytes for {frames}x{height}x{width}x3 video", data.len())));
        }
        Ok(Self { frames, height, width, data })
    }

    pub fn filled(frames: usize, height: usize, width: usize, value: u8) -> Self {
        Self { frames, height, width, data: vec![value; frames * height * width * 3] }
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [u8] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn same_shape(&self, other: &Video8) -> bool {
        self.frames == other.frames && self.height == other.height && self.width == other.width
    }

    /// First frame as a single-frame video.
    pub fn first_frame(&self) -> Video8 {
        Video8 { frames: 1, height: self.height, width: self.width, data: self.frame(0).to_vec() }
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<Video8> {
        if start + len > self.frames {
            return Err(Error::Shape(format!(
                "frames {start}..{} out of range for {}-frame video",
                start + len,
                self.frames
            )));
        }
        let n = self.frame_len();
        Ok(Video8 {
            frames: len,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + len) * n].to_vec(),
        })
    }

    /// Normalized `[T, 3, H, W]` float tensor, `x / 127.5 - 1`.
    pub fn to_tensor(&self, device: Device) -> Tensor {
        let t = Tensor::from_slice(&self.data)
            .view([self.frames as i64, self.height as i64, self.width as i64, 3])
            .permute([0, 3, 1, 2])
            .to_kind(Kind::Float);
        (t / 127.5 - 1.0).to_device(device)
    }

    /// Inverse of [`Video8::to_tensor`]: `round((x + 1) * 127.5)`, clamped to `[0, 255]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let size = t.size();
        let (frames, height, width) = match size.as_slice() {
            [n, 3, h, w] => (*n as usize, *h as usize, *w as usize),
            [3, h, w] => (1, *h as usize, *w as usize),
            _ => return Err(Error::Shape(format!("expected [T,3,H,W] tensor, got {size:?}"))),
        };
        let u8s = ((t.detach().to_device(Device::Cpu).to_kind(Kind::Float) + 1.0) * 127.5)
            .round()
            .clamp(0.0, 255.0)
            .to_kind(Kind::Uint8)
            .view([frames as i64, 3, height as i64, width as i64])
            .permute([0, 2, 3, 1])
            .contiguous();
        let data = Vec::<u8>::try_from(u8s.view([-1]))?;
        Video8::new(frames, height, width, data)
    }
}

pub fn normalize_pixel(x: u8) -> f32 {
    x as f32 / 127.5 - 1.0
}

pub fn denormalize_pixel(x: f32) -> u8 {
    ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}
