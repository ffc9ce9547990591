//! Frame-quality and landmark metrics on 8-bit videos.

use serde::{Deserialize, Serialize};

use crate::dataset::landmarks::{Landmarks, NUM_LANDMARKS};
use crate::error::{Error, Result};
use crate::video::Video8;

/// Reported PSNR for identical frames.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);
/// Clips whose pairwise landmark failure rate exceeds this are flagged.
pub const LANDMARK_FAILURE_FLAG: f64 = 0.2;

fn check_same(a: &Video8, b: &Video8) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "videos differ: {}x{}x{} vs {}x{}x{}",
            a.frames, a.height, a.width, b.frames, b.height, b.width
        )))
    }
}

/// PSNR of one frame pair in dB, peak 255, capped at [`PSNR_CAP`].
pub fn psnr_frame(a: &[u8], b: &[u8]) -> f64 {
    let se: u64 = a.iter().zip(b).map(|(&x, &y)| (x as i64 - y as i64).pow(2) as u64).sum();
    if se == 0 {
        return PSNR_CAP;
    }
    let mse = se as f64 / a.len() as f64;
    (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP)
}

/// Mean per-frame PSNR.
pub fn psnr(a: &Video8, b: &Video8) -> Result<f64> {
    check_same(a, b)?;
    if a.frames == 0 {
        return Err(Error::InvalidInput("empty video".into()));
    }
    Ok((0..a.frames).map(|t| psnr_frame(a.frame(t), b.frame(t))).sum::<f64>() / a.frames as f64)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable Gaussian filter over the valid region of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over the valid window positions of one channel.
fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> f64 {
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mu_a = filter_valid(a, h, w, g);
    let mu_b = filter_valid(b, h, w, g);
    let aa = filter_valid(&prod(a, a), h, w, g);
    let bb = filter_valid(&prod(b, b), h, w, g);
    let ab = filter_valid(&prod(a, b), h, w, g);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    total / n as f64
}

/// SSIM of one RGB frame pair: Gaussian 11×11 window, σ = 1.5, averaged over
/// window positions and then over the three channels.
pub fn ssim_frame(a: &[u8], b: &[u8], h: usize, w: usize) -> Result<f64> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "{h}x{w} frames are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let g = gaussian_window();
    let mut total = 0.0;
    for c in 0..3 {
        let pa: Vec<f64> = a.iter().skip(c).step_by(3).map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.iter().skip(c).step_by(3).map(|&v| v as f64).collect();
        total += ssim_plane(&pa, &pb, h, w, &g);
    }
    Ok(total / 3.0)
}

/// Mean per-frame SSIM.
pub fn ssim(a: &Video8, b: &Video8) -> Result<f64> {
    check_same(a, b)?;
    if a.frames == 0 {
        return Err(Error::InvalidInput("empty video".into()));
    }
    let mut total = 0.0;
    for t in 0..a.frames {
        total += ssim_frame(a.frame(t), b.frame(t), a.height, a.width)?;
    }
    Ok(total / a.frames as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nlmd {
    pub value: f64,
    /// Frames where both tracks had landmarks.
    pub matched: usize,
    /// Frames dropped because either track failed.
    pub dropped: usize,
    pub failure_rate: f64,
    pub flagged: bool,
}

/// Mean landmark distance of one frame pair, in units of the ground truth's
/// inter-ocular distance.
pub fn nlmd_frame(gen: &Landmarks, gt: &Landmarks) -> Option<f64> {
    let norm = gt.inter_ocular();
    if !(norm > 0.0) {
        return None;
    }
    let sum: f64 = gen.points().iter().zip(gt.points()).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])).sum();
    Some(sum / NUM_LANDMARKS as f64 / norm)
}

/// Normalized landmark distance over matched frames. Frames where either side
/// has no landmarks are dropped pairwise and counted.
pub fn nlmd(gen: &[Option<Landmarks>], gt: &[Option<Landmarks>]) -> Result<Nlmd> {
    if gen.len() != gt.len() {
        return Err(Error::Shape(format!("{} generated vs {} ground-truth landmark frames", gen.len(), gt.len())));
    }
    let values: Vec<f64> = gen
        .iter()
        .zip(gt)
        .filter_map(|(g, t)| match (g, t) {
            (Some(g), Some(t)) => nlmd_frame(g, t),
            _ => None,
        })
        .collect();
    if values.is_empty() {
        return Err(Error::InvalidInput("no frame has landmarks in both videos".into()));
    }
    let dropped = gen.len() - values.len();
    let failure_rate = dropped as f64 / gen.len() as f64;
    Ok(Nlmd {
        value: values.iter().sum::<f64>() / values.len() as f64,
        matched: values.len(),
        dropped,
        failure_rate,
        flagged: failure_rate > LANDMARK_FAILURE_FLAG,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dataset::synth::canonical_face;

    fn random_video(seed: u64, frames: usize, size: usize) -> Video8 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..frames * size * size * 3).map(|_| rng.random()).collect();
        Video8::new(frames, size, size, data).unwrap()
    }

    #[test]
    fn psnr_identity_and_unit_mse() {
        let a = random_video(1, 2, 16);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let mut b = a.clone();
        for v in b.data.iter_mut() {
            *v = if *v == 255 { 254 } else { *v + 1 };
        }
        assert!((psnr(&a, &b).unwrap() - 10.0 * 65025f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn psnr_drops_with_noise() {
        let a = random_video(2, 1, 32);
        let noisy = |amp: i32| {
            let mut b = a.clone();
            for (i, v) in b.data.iter_mut().enumerate() {
                let d = if i % 2 == 0 { amp } else { -amp };
                *v = (*v as i32 + d).clamp(0, 255) as u8;
            }
            psnr(&a, &b).unwrap()
        };
        assert!(noisy(2) > noisy(5) && noisy(5) > noisy(20));
    }

    #[test]
    fn ssim_identity_and_small_frames() {
        let a = random_video(3, 2, 24);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let tiny = random_video(3, 1, 8);
        assert!(ssim(&tiny, &tiny).is_err());
        assert!(ssim(&a, &random_video(3, 1, 24)).is_err());
    }

    #[test]
    fn nlmd_oracles() {
        let f = canonical_face();
        let track = vec![Some(f.clone()); 4];
        assert_eq!(nlmd(&track, &track).unwrap().value, 0.0);
        let iod = f.inter_ocular();
        let shifted: Vec<_> = track.iter().map(|l| l.as_ref().map(|l| l.map(|p| [p[0] + iod, p[1]]))).collect();
        assert!((nlmd(&shifted, &track).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nlmd_drops_failures_pairwise() {
        let f = canonical_face();
        let gt = vec![Some(f.clone()), None, Some(f.clone()), Some(f.clone()), Some(f.clone())];
        let gen = vec![Some(f.clone()), Some(f.clone()), None, Some(f.clone()), Some(f.clone())];
        let r = nlmd(&gen, &gt).unwrap();
        assert_eq!((r.matched, r.dropped), (3, 2));
        assert!(r.flagged);
        assert!(nlmd(&[None], &[Some(f)]).is_err());
    }

    proptest! {
        #[test]
        fn ssim_is_symmetric_and_bounded(s1 in 0u64..1000, s2 in 0u64..1000) {
            let (a, b) = (random_video(s1, 1, 16), random_video(s2 + 5000, 1, 16));
            let (x, y) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
            prop_assert!((x - y).abs() <= 1e-12);
            prop_assert!(x <= 1.0 + 1e-12 && x >= -1.0);
        }

        #[test]
        fn nlmd_scales_with_translation(dx in -20.0f64..20.0, dy in -20.0f64..20.0) {
            let f = canonical_face();
            let moved = f.map(|p| [p[0] + dx, p[1] + dy]);
            let v = nlmd(&[Some(moved)], &[Some(f.clone())]).unwrap().value;
            prop_assert!((v - dx.hypot(dy) / f.inter_ocular()).abs() < 1e-9);
        }
    }
}
