//! Photometric augmentation applied identically to every frame of a window.
//!
//! Geometry is never touched, so landmarks, masks, audio and labels stay valid.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tch::{Kind, Tensor};

use crate::config::AugmentConfig;

/// Concrete transform parameters drawn for one window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AugmentParams {
    /// `(alpha, beta)` of `x * alpha + beta` on the `[0, 1]` scale.
    pub brightness_contrast: Option<(f64, f64)>,
    pub gamma: Option<f64>,
    /// Hue rotation (degrees), saturation factor, value factor.
    pub hsv: Option<(f64, f64, f64)>,
    /// `(clip_limit, tiles)` for contrast-limited adaptive histogram equalization.
    pub clahe: Option<(f64, usize)>,
    /// Noise standard deviation (8-bit scale) and the seed of the noise field.
    pub noise: Option<(f64, u64)>,
    /// Output channel `c` takes input channel `perm[c]`.
    pub channel_perm: Option<[i64; 3]>,
    /// Per-channel offsets on the 8-bit scale.
    pub rgb_shift: Option<[f64; 3]>,
}

impl AugmentParams {
    pub fn sample(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let mut p = AugmentParams::default();
        let hit = |rng: &mut dyn rand::RngCore, prob: f64| prob > 0.0 && rng.random::<f64>() < prob;
        let sym = |rng: &mut dyn rand::RngCore, lim: f64| {
            if lim > 0.0 {
                rng.random_range(-lim..=lim)
            } else {
                0.0
            }
        };

        let do_b = hit(rng, cfg.p_brightness);
        let do_c = hit(rng, cfg.p_contrast);
        if do_b || do_c {
            let beta = if do_b { sym(rng, cfg.brightness_limit) } else { 0.0 };
            let alpha = if do_c { 1.0 + sym(rng, cfg.contrast_limit) } else { 1.0 };
            p.brightness_contrast = Some((alpha, beta));
        }
        if hit(rng, cfg.p_gamma) {
            let (lo, hi) = cfg.gamma_limit;
            p.gamma = Some(if hi > lo { rng.random_range(lo..=hi) } else { lo } / 100.0);
        }
        if hit(rng, cfg.p_hsv) {
            let hue = sym(rng, cfg.hue_limit);
            let sat = 1.0 + sym(rng, cfg.saturation_limit);
            let val = 1.0 + sym(rng, cfg.value_limit);
            p.hsv = Some((hue, sat.max(0.0), val.max(0.0)));
        }
        if hit(rng, cfg.p_clahe) {
            p.clahe = Some((cfg.clahe_clip_limit, cfg.clahe_tiles.max(1)));
        }
        if hit(rng, cfg.p_noise) {
            let (lo, hi) = cfg.noise_std;
            let std = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            p.noise = Some((std, rng.random()));
        }
        if hit(rng, cfg.p_channel_shuffle) {
            let mut perm = [0i64, 1, 2];
            perm.shuffle(rng);
            p.channel_perm = Some(perm);
        }
        if hit(rng, cfg.p_rgb_shift) {
            let l = cfg.rgb_shift_limit;
            p.rgb_shift = Some([sym(rng, l), sym(rng, l), sym(rng, l)]);
        }
        p
    }

    pub fn is_identity(&self) -> bool {
        *self == AugmentParams::default()
    }
}

/// Draws parameters from `seed` and applies them to `frames` (`[..., 3, H, W]`, values in `[-1, 1]`).
pub fn augment(frames: &Tensor, cfg: &AugmentConfig, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = AugmentParams::sample(cfg, &mut rng);
    apply_augment(frames, &params)
}

pub fn apply_augment(frames: &Tensor, params: &AugmentParams) -> Tensor {
    if params.is_identity() {
        return frames.shallow_clone();
    }
    let shape = frames.size();
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let mut x = ((frames.detach().to_kind(Kind::Float) + 1.0) / 2.0).reshape([-1, 3, h, w]);

    if let Some((alpha, beta)) = params.brightness_contrast {
        x = (x * alpha + beta).clamp(0.0, 1.0);
    }
    if let Some(g) = params.gamma {
        x = x.clamp(0.0, 1.0).pow_tensor_scalar(g);
    }
    if let Some((hue, sat, val)) = params.hsv {
        let m = Tensor::from_slice(&hsv_matrix(hue, sat, val)).view([3, 3]).to_device(x.device());
        x = Tensor::einsum("ij,njhw->nihw", &[m, x], None::<i64>).clamp(0.0, 1.0);
    }
    if let Some((clip, tiles)) = params.clahe {
        x = clahe_tensor(&x, clip, tiles);
    }
    if let Some((std, seed)) = params.noise {
        let n = x.numel();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f32> =
            (0..n).map(|_| StandardNormal.sample(&mut rng)).map(|v: f32| v * (std / 255.0) as f32).collect();
        x = x + Tensor::from_slice(&noise).view_as(&frames.reshape([-1, 3, h, w])).to_device(frames.device());
    }
    if let Some(perm) = params.channel_perm {
        x = x.index_select(1, &Tensor::from_slice(&perm).to_device(x.device()));
    }
    if let Some(shift) = params.rgb_shift {
        let s: Vec<f32> = shift.iter().map(|v| (*v / 255.0) as f32).collect();
        x = x + Tensor::from_slice(&s).view([1, 3, 1, 1]).to_device(frames.device());
    }
    (x.clamp(0.0, 1.0) * 2.0 - 1.0).reshape(&shape)
}

/// RGB -> RGB matrix rotating hue in YIQ space, scaling chroma by `sat` and
/// all channels by `val`.
fn hsv_matrix(hue_deg: f64, sat: f64, val: f64) -> Vec<f32> {
    const TO_YIQ: [[f64; 3]; 3] = [[0.299, 0.587, 0.114], [0.596, -0.274, -0.322], [0.211, -0.523, 0.312]];
    const FROM_YIQ: [[f64; 3]; 3] = [[1.0, 0.956, 0.621], [1.0, -0.272, -0.647], [1.0, -1.106, 1.703]];
    let (s, c) = hue_deg.to_radians().sin_cos();
    let mid = [[1.0, 0.0, 0.0], [0.0, sat * c, -sat * s], [0.0, sat * s, sat * c]];
    let mul = |a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]| {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    };
    let m = mul(&FROM_YIQ, &mul(&mid, &TO_YIQ));
    m.iter().flatten().map(|v| (v * val) as f32).collect()
}

fn clahe_tensor(x: &Tensor, clip_limit: f64, tiles: usize) -> Tensor {
    let size = x.size();
    let (n, h, w) = (size[0] as usize, size[2] as usize, size[3] as usize);
    let hwc = x.clamp(0.0, 1.0).permute([0, 2, 3, 1]).contiguous().to_device(tch::Device::Cpu);
    let mut data = Vec::<f32>::try_from(hwc.view([-1])).expect("float tensor");
    let plane = h * w;
    for f in 0..n {
        let px = &mut data[f * plane * 3..(f + 1) * plane * 3];
        let luma: Vec<u8> = px
            .chunks(3)
            .map(|c| ((0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]) * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let eq = clahe(&luma, h, w, clip_limit, tiles);
        for (i, c) in px.chunks_mut(3).enumerate() {
            let delta = (eq[i] as f32 - luma[i] as f32) / 255.0;
            for v in c.iter_mut() {
                *v = (*v + delta).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::from_slice(&data)
        .view([n as i64, h as i64, w as i64, 3])
        .permute([0, 3, 1, 2])
        .contiguous()
        .to_device(x.device())
}

/// Contrast-limited adaptive histogram equalization of an 8-bit plane.
pub fn clahe(plane: &[u8], h: usize, w: usize, clip_limit: f64, tiles: usize) -> Vec<u8> {
    let ty = tiles.min(h).max(1);
    let tx = tiles.min(w).max(1);
    let tile_h = h.div_ceil(ty);
    let tile_w = w.div_ceil(tx);
    let mut luts = vec![[0u8; 256]; ty * tx];
    for j in 0..ty {
        for i in 0..tx {
            let (y0, y1) = (j * tile_h, ((j + 1) * tile_h).min(h));
            let (x0, x1) = (i * tile_w, ((i + 1) * tile_w).min(w));
            let mut hist = [0u32; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[plane[y * w + x] as usize] += 1;
                }
            }
            let count = ((y1 - y0) * (x1 - x0)).max(1) as u32;
            let limit = ((clip_limit * count as f64 / 256.0).max(1.0)) as u32;
            let mut excess = 0u32;
            for b in hist.iter_mut() {
                if *b > limit {
                    excess += *b - limit;
                    *b = limit;
                }
            }
            let (add, rem) = (excess / 256, (excess % 256) as usize);
            for (k, b) in hist.iter_mut().enumerate() {
                *b += add + u32::from(k < rem);
            }
            let mut cdf = 0u32;
            let lut = &mut luts[j * tx + i];
            for (k, b) in hist.iter().enumerate() {
                cdf += b;
                lut[k] = ((cdf as f64 * 255.0 / count as f64).round()).min(255.0) as u8;
            }
        }
    }
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        let gy = (y as f64 + 0.5) / tile_h as f64 - 0.5;
        let j0 = gy.floor().clamp(0.0, (ty - 1) as f64) as usize;
        let j1 = (j0 + 1).min(ty - 1);
        let fy = (gy - j0 as f64).clamp(0.0, 1.0);
        for x in 0..w {
            let gx = (x as f64 + 0.5) / tile_w as f64 - 0.5;
            let i0 = gx.floor().clamp(0.0, (tx - 1) as f64) as usize;
            let i1 = (i0 + 1).min(tx - 1);
            let fx = (gx - i0 as f64).clamp(0.0, 1.0);
            let v = plane[y * w + x] as usize;
            let l = |j: usize, i: usize| luts[j * tx + i][v] as f64;
            let top = l(j0, i0) * (1.0 - fx) + l(j0, i1) * fx;
            let bot = l(j1, i0) * (1.0 - fx) + l(j1, i1) * fx;
            out[y * w + x] = (top * (1.0 - fy) + bot * fy).round() as u8;
        }
    }
    out
}
