//! Mouth-region mask: a 2-D Gaussian weight map centered on the temporal mean
//! of the mouth-landmark centroid.

use tch::{Device, Kind, Tensor};

use super::landmarks::mean_point;
use super::similarity::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrmOptions {
    /// Lower bound on each Gaussian σ, in pixels.
    pub sigma_floor: f64,
    /// Loss weight far from the mouth; the map is `base + (1 - base) * gaussian`.
    pub base: f64,
}

impl Default for MrmOptions {
    fn default() -> Self {
        Self { sigma_floor: 8.0, base: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MouthRegionMask {
    pub size: usize,
    /// Peak-normalized Gaussian, row-major `size × size`.
    pub weights: Vec<f64>,
    pub center: (f64, f64),
    pub sigma: (f64, f64),
    pub base: f64,
}

impl MouthRegionMask {
    /// All-ones mask: the loss reduces to a plain mean L1.
    pub fn uniform(size: usize) -> Self {
        let c = (size as f64 - 1.0) / 2.0;
        Self { size, weights: vec![1.0; size * size], center: (c, c), sigma: (f64::INFINITY, f64::INFINITY), base: 1.0 }
    }

    pub fn from_gaussian(size: usize, center: (f64, f64), sigma: (f64, f64), base: f64) -> Self {
        let mut weights = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let dx = (x as f64 - center.0) / sigma.0;
                let dy = (y as f64 - center.1) / sigma.1;
                weights.push((-0.5 * (dx * dx + dy * dy)).exp());
            }
        }
        let peak = weights.iter().cloned().fold(0.0f64, f64::max);
        let weights = weights.into_iter().map(|w| w / peak).collect();
        Self { size, weights, center, sigma, base }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.size + x]
    }

    /// Per-pixel loss weights `base + (1 - base) * gaussian`.
    pub fn loss_weights(&self) -> Vec<f32> {
        let b = self.base;
        self.weights.iter().map(|w| (b + (1.0 - b) * w) as f32).collect()
    }

    /// Loss weights as a `[1, 1, H, W]` tensor.
    pub fn to_tensor(&self, device: Device) -> Tensor {
        Tensor::from_slice(&self.loss_weights())
            .view([1, 1, self.size as i64, self.size as i64])
            .to_kind(Kind::Float)
            .to_device(device)
    }
}

/// Builds the mask from per-frame mouth landmarks (indices 48-67 of the
/// 68-point scheme). σ is half the temporal-mean mouth bounding box, floored.
pub fn compute_mrm(mouth: &[Vec<Point>], size: usize, opts: MrmOptions) -> Result<MouthRegionMask> {
    let frames: Vec<&Vec<Point>> = mouth.iter().filter(|f| !f.is_empty()).collect();
    if frames.is_empty() {
        return Err(Error::InvalidInput("no mouth landmarks to build a mask from".into()));
    }
    let n = frames.len() as f64;
    let (mut cx, mut cy, mut bw, mut bh) = (0.0, 0.0, 0.0, 0.0);
    for f in &frames {
        let c = mean_point(f);
        cx += c[0];
        cy += c[1];
        let (lo_x, hi_x) = f.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p[0]), b.max(p[0])));
        let (lo_y, hi_y) = f.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p[1]), b.max(p[1])));
        bw += hi_x - lo_x;
        bh += hi_y - lo_y;
    }
    let center = (cx / n, cy / n);
    if !center.0.is_finite() || !center.1.is_finite() {
        return Err(Error::InvalidInput("non-finite mouth landmarks".into()));
    }
    let sigma = ((bw / n / 2.0).max(opts.sigma_floor), (bh / n / 2.0).max(opts.sigma_floor));
    Ok(MouthRegionMask::from_gaussian(size, center, sigma, opts.base))
}
