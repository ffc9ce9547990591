//! Layer helpers shared by the generator and the discriminators.

use tch::nn::{self, Module};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

/// Leaky ReLU with an explicit negative slope (valid for slopes in `[0, 1]`).
pub fn lrelu(x: &Tensor, slope: f64) -> Tensor {
    x.prelu(&Tensor::from_slice(&[slope]).to_kind(x.kind()).to_device(x.device()))
}

/// 3×3 convolution with "same" padding and the given stride.
pub fn conv3(vs: nn::Path, c_in: i64, c_out: i64, stride: i64) -> nn::Conv2D {
    nn::conv2d(vs, c_in, c_out, 3, nn::ConvConfig { stride, padding: 1, ..Default::default() })
}

/// Nearest-neighbor downsampling by two: keeps even rows and columns.
pub fn down2(x: &Tensor) -> Tensor {
    let s = x.size();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    x.upsample_nearest2d([h / 2, w / 2], None, None)
}

/// Nearest-neighbor upsampling by two.
pub fn up2(x: &Tensor) -> Tensor {
    let s = x.size();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    x.upsample_nearest2d([h * 2, w * 2], None, None)
}

/// Stack of linear layers, each followed by a leaky ReLU.
#[derive(Debug)]
pub struct Mlp {
    layers: Vec<nn::Linear>,
    slope: f64,
}

impl Mlp {
    pub fn new(vs: nn::Path, input: i64, widths: &[i64], slope: f64) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut c = input;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(nn::linear(&vs / format!("fc{i}"), c, w, Default::default()));
            c = w;
        }
        Self { layers, slope }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.layers.iter().fold(x.shallow_clone(), |h, l| lrelu(&l.forward(&h), self.slope))
    }
}

pub fn check_dims(t: &Tensor, dims: usize, what: &str) -> Result<Vec<i64>> {
    let s = t.size();
    if s.len() != dims {
        return Err(Error::Shape(format!("{what}: expected {dims} dimensions, got {s:?}")));
    }
    Ok(s)
}

/// Frames `[B, T, 3, H, W]` must be 128×128 RGB.
pub fn check_frames(t: &Tensor, channels: i64, what: &str) -> Result<(i64, i64)> {
    let s = check_dims(t, 5, what)?;
    let size = crate::video::FRAME_SIZE as i64;
    if s[2] != channels || s[3] != size || s[4] != size {
        return Err(Error::Shape(format!("{what}: expected [B, T, {channels}, {size}, {size}], got {s:?}")));
    }
    Ok((s[0], s[1]))
}

/// One-hot encoding of class indices as `[N, classes]` floats.
pub fn one_hot(indices: &[i64], classes: i64, device: tch::Device) -> Tensor {
    Tensor::from_slice(indices).to_device(device).one_hot(classes).to_kind(Kind::Float)
}

/// Number of trainable scalars.
pub fn parameter_count(vs: &nn::VarStore) -> i64 {
    vs.trainable_variables().iter().map(|t| t.numel() as i64).sum()
}
