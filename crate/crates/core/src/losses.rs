//! Training objectives: mouth-weighted L1, perceptual feature matching,
//! WGAN-GP critic loss with gradient penalty, and the 7-class emotion GAN loss.

use rand::Rng;
use tch::{Kind, Tensor};

use crate::config::LossWeights;
use crate::emotion::{FAKE_CLASS, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::perceptual::FeatureExtractor;

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.size(), b.size())));
    }
    Ok(())
}

/// Mean over every element of `weights · |gen − gt|`.
///
/// `weights` broadcasts against the frames; its last two dimensions must match
/// the frame resolution (e.g. `[H, W]`, `[1, 1, H, W]` or `[B, 1, 1, H, W]`).
pub fn mrm_l1(gen: &Tensor, gt: &Tensor, weights: &Tensor) -> Result<Tensor> {
    same_shape(gen, gt, "mrm_l1 inputs")?;
    let (g, w) = (gen.size(), weights.size());
    if w.len() < 2 || w.len() > g.len() || w[w.len() - 2..] != g[g.len() - 2..] {
        return Err(Error::Shape(format!("mask {w:?} does not match frames {g:?}")));
    }
    let weighted = (gen - gt).abs() * weights.to_kind(gen.kind());
    Ok(weighted.mean(gen.kind()))
}

/// Sum over taps of the mean squared feature difference.
///
/// Frames may be `[N, 3, H, W]` or `[B, T, 3, H, W]`; each frame is processed
/// independently. Ground-truth features are not differentiated.
pub fn perceptual_loss(extractor: &FeatureExtractor, gen: &Tensor, gt: &Tensor) -> Result<Tensor> {
    same_shape(gen, gt, "perceptual inputs")?;
    let s = gen.size();
    if s.len() < 4 || s[s.len() - 3] != 3 {
        return Err(Error::Shape(format!("perceptual loss needs [..., 3, H, W] frames, got {s:?}")));
    }
    let flat = |x: &Tensor| x.reshape([-1, 3, s[s.len() - 2], s[s.len() - 1]]);
    let fg = extractor.features(&flat(gen));
    let ft = extractor.features(&flat(&gt.detach()));
    let mut total = Tensor::zeros([], (gen.kind(), gen.device()));
    for (a, b) in fg.iter().zip(&ft) {
        total = total + (a - b).square().mean(gen.kind());
    }
    Ok(total)
}

/// Critic objective: `mean(fake) − mean(real) + λ·gp`.
pub fn wgan_critic_step_loss(real_scores: &Tensor, fake_scores: &Tensor, gp: &Tensor, gp_lambda: f64) -> Tensor {
    fake_scores.mean(Kind::Float) - real_scores.mean(Kind::Float) + gp * gp_lambda
}

/// Generator's adversarial term against the frame critic: `−mean(fake)`.
pub fn wgan_generator_loss(fake_scores: &Tensor) -> Tensor {
    -fake_scores.mean(Kind::Float)
}

/// Interpolation weights, one per frame: shape `[B, T, 1, ..., 1]` matching
/// `frames` of rank `rank`.
pub fn sample_interpolation(batch: i64, frames: i64, rank: usize, rng: &mut impl Rng, like: &Tensor) -> Tensor {
    let u: Vec<f64> = (0..batch * frames).map(|_| rng.random::<f64>()).collect();
    let mut shape = vec![batch, frames];
    shape.resize(rank, 1);
    Tensor::from_slice(&u).to_kind(like.kind()).to_device(like.device()).view(shape.as_slice())
}

/// Gradient penalty at interpolates `u·real + (1−u)·fake`, with `u` given per frame.
///
/// `critic` maps frames `[B, T, ...]` to one score per frame `[B, T]`. The
/// graph is kept so the penalty can be differentiated w.r.t. critic parameters.
pub fn gradient_penalty_at<F>(critic: F, real: &Tensor, fake: &Tensor, u: &Tensor) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    same_shape(real, fake, "gradient penalty inputs")?;
    let s = real.size();
    if s.len() < 3 {
        return Err(Error::Shape(format!("gradient penalty needs [B, T, ...] frames, got {s:?}")));
    }
    let mixed: Tensor = u * real.detach() + (1.0 - u) * fake.detach();
    let x = mixed.detach().set_requires_grad(true);
    let scores = critic(&x)?;
    if scores.size() != s[..2] {
        return Err(Error::Shape(format!("critic returned {:?}, want one score per frame", scores.size())));
    }
    let grads = Tensor::f_run_backward(&[scores.sum(scores.kind())], &[&x], true, true)?;
    let g = grads
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidInput("critic output does not depend on its input".into()))?;
    let norm = (g.reshape([s[0] * s[1], -1]).square().sum_dim_intlist(1, false, g.kind()) + 1e-12).sqrt();
    Ok((norm - 1.0).square().mean(g.kind()))
}

/// [`gradient_penalty_at`] with `u ~ Uniform(0, 1)` drawn per frame from `rng`.
pub fn gradient_penalty<F>(critic: F, real: &Tensor, fake: &Tensor, rng: &mut impl Rng) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let s = real.size();
    if s.len() < 3 {
        return Err(Error::Shape(format!("gradient penalty needs [B, T, ...] frames, got {s:?}")));
    }
    let u = sample_interpolation(s[0], s[1], s.len(), rng, real);
    gradient_penalty_at(critic, real, fake, &u)
}

fn check_labels(labels: &[i64]) -> Result<()> {
    match labels.iter().find(|&&l| !(0..NUM_EMOTIONS as i64).contains(&l)) {
        Some(&bad) => Err(Error::EmotionIndex(bad)),
        None => Ok(()),
    }
}

fn label_tensor(labels: &[i64], like: &Tensor) -> Tensor {
    Tensor::from_slice(labels).to_device(like.device())
}

/// Mean cross-entropy of class posteriors `[B, C]` against `labels`.
pub fn cross_entropy_probs(probs: &Tensor, labels: &[i64]) -> Tensor {
    let idx = label_tensor(labels, probs).unsqueeze(1);
    -probs.gather(1, &idx, false).clamp_min(1e-12).log().mean(probs.kind())
}

/// Mean cross-entropy of logits `[B, C]` against `labels`.
pub fn cross_entropy_logits(logits: &Tensor, labels: &[i64]) -> Tensor {
    let idx = label_tensor(labels, logits).unsqueeze(1);
    -logits.log_softmax(-1, logits.kind()).gather(1, &idx, false).mean(logits.kind())
}

#[derive(Debug)]
pub struct EmotionGanLosses {
    /// `CE(real, true label) + CE(fake, fake class)`.
    pub d_loss: Tensor,
    /// `CE(fake, conditioning label)`.
    pub g_loss: Tensor,
}

fn emotion_gan<F>(real: &Tensor, fake: &Tensor, true_labels: &[i64], cond: &[i64], ce: F) -> Result<EmotionGanLosses>
where
    F: Fn(&Tensor, &[i64]) -> Tensor,
{
    check_labels(true_labels)?;
    check_labels(cond)?;
    let (b_real, b_fake) = (real.size()[0] as usize, fake.size()[0] as usize);
    if true_labels.len() != b_real || cond.len() != b_fake {
        return Err(Error::Shape("one label per posterior row is required".into()));
    }
    let fake_labels = vec![FAKE_CLASS; b_fake];
    Ok(EmotionGanLosses { d_loss: ce(real, true_labels) + ce(fake, &fake_labels), g_loss: ce(fake, cond) })
}

/// Emotion GAN losses from 7-class posteriors.
pub fn emotion_gan_losses(
    posterior_real: &Tensor,
    posterior_fake: &Tensor,
    true_labels: &[i64],
    conditioned_labels: &[i64],
) -> Result<EmotionGanLosses> {
    emotion_gan(posterior_real, posterior_fake, true_labels, conditioned_labels, cross_entropy_probs)
}

/// Emotion GAN losses from 7-class logits (numerically stable form used in training).
pub fn emotion_gan_losses_logits(
    logits_real: &Tensor,
    logits_fake: &Tensor,
    true_labels: &[i64],
    conditioned_labels: &[i64],
) -> Result<EmotionGanLosses> {
    emotion_gan(logits_real, logits_fake, true_labels, conditioned_labels, cross_entropy_logits)
}

/// Loss terms of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub l1: f64,
    pub perceptual: f64,
    pub j_fd: f64,
    pub j_ed: f64,
}

impl ObjectiveTerms {
    pub fn check_finite(&self, iteration: u64) -> Result<()> {
        for (term, v) in
            [("l1_mrm", self.l1), ("perceptual", self.perceptual), ("j_fd", self.j_fd), ("j_ed", self.j_ed)]
        {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss { term: term.into(), iteration });
            }
        }
        Ok(())
    }
}

/// `α·l1 + β·perc + γ·j_fd + δ·j_ed`, summed with compensation so the result
/// is the correctly rounded value of the exact weighted sum in common cases.
pub fn generator_objective(t: ObjectiveTerms, w: &LossWeights) -> Result<f64> {
    t.check_finite(0)?;
    let terms = [w.alpha * t.l1, w.beta * t.perceptual, w.gamma * t.j_fd, w.delta * t.j_ed];
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in terms {
        let s = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - s) + x } else { (x - s) + sum };
        sum = s;
    }
    Ok(sum + comp)
}

/// Differentiable form of [`generator_objective`]; terms with zero weight are skipped.
pub fn generator_objective_tensor(
    l1: &Tensor,
    perceptual: &Tensor,
    j_fd: &Tensor,
    j_ed: &Tensor,
    w: &LossWeights,
) -> Tensor {
    [(l1, w.alpha), (perceptual, w.beta), (j_fd, w.gamma), (j_ed, w.delta)]
        .into_iter()
        .filter(|(_, weight)| *weight != 0.0)
        .map(|(t, weight)| t * weight)
        .reduce(|a, b| a + b)
        .unwrap_or_else(|| Tensor::zeros([], (l1.kind(), l1.device())))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tch::Device;

    use super::*;
    use crate::dataset::mrm::MouthRegionMask;

    fn opts() -> (Kind, Device) {
        (Kind::Double, Device::Cpu)
    }

    #[test]
    fn mrm_l1_basics() {
        let gt = Tensor::rand([1, 2, 3, 16, 16], opts());
        let ones = Tensor::ones([16, 16], opts());
        assert_eq!(mrm_l1(&gt, &gt, &ones).unwrap().double_value(&[]), 0.0);
        let off = mrm_l1(&(&gt + 0.5), &gt, &ones).unwrap().double_value(&[]);
        assert!((off - 0.5).abs() < 1e-12);
        assert!(mrm_l1(&gt, &gt, &Tensor::ones([8, 8], opts())).is_err());
    }

    #[test]
    fn error_at_mask_peak_costs_more_than_in_tail() {
        let mask = MouthRegionMask::from_gaussian(32, (16.0, 20.0), (4.0, 3.0), 0.1);
        let w = mask.to_tensor(Device::Cpu).to_kind(Kind::Double);
        let gt = Tensor::zeros([1, 1, 3, 32, 32], opts());
        let bump = |x: i64, y: i64| {
            let g = gt.copy();
            let _ = g.narrow(3, y, 1).narrow(4, x, 1).fill_(1.0);
            g
        };
        let peak = mrm_l1(&bump(16, 20), &gt, &w).unwrap().double_value(&[]);
        let tail = mrm_l1(&bump(2, 2), &gt, &w).unwrap().double_value(&[]);
        assert!(peak > tail && tail > 0.0);
    }

    #[test]
    fn critic_loss_arithmetic() {
        let zero = Tensor::zeros([], opts());
        let s = Tensor::from_slice(&[0.3f32, -0.2]);
        assert_eq!(wgan_critic_step_loss(&s, &s, &zero, 10.0).double_value(&[]), 0.0);
        let real = Tensor::from_slice(&[1.0f32, 1.0]);
        let fake = Tensor::from_slice(&[-1.0f32, -1.0]);
        assert_eq!(wgan_critic_step_loss(&real, &fake, &zero, 10.0).double_value(&[]), -2.0);
    }

    #[test]
    fn penalty_on_linear_toy_critics() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let real = Tensor::randn([3, 4, 1, 1, 1], opts());
        let fake = Tensor::randn([3, 4, 1, 1, 1], opts());
        let sum_critic = |k: f64| move |x: &Tensor| Ok(x.flatten(2, -1).sum_dim_intlist(2, false, Kind::Double) * k);
        let unit = gradient_penalty(sum_critic(1.0), &real, &fake, &mut rng).unwrap();
        let two = gradient_penalty(sum_critic(2.0), &real, &fake, &mut rng).unwrap();
        assert!(unit.double_value(&[]).abs() < 1e-6);
        assert!((two.double_value(&[]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn penalty_symmetric_under_swap() {
        let real = Tensor::randn([2, 3, 2, 2, 2], opts());
        let fake = Tensor::randn([2, 3, 2, 2, 2], opts());
        let critic = |x: &Tensor| Ok(x.flatten(2, -1).square().sum_dim_intlist(2, false, Kind::Double));
        let u = Tensor::rand([2, 3, 1, 1, 1], opts());
        let a = gradient_penalty_at(critic, &real, &fake, &u).unwrap().double_value(&[]);
        let b = gradient_penalty_at(critic, &fake, &real, &(1.0 - &u)).unwrap().double_value(&[]);
        assert!((a - b).abs() < 1e-12 && a >= 0.0);
    }

    #[test]
    fn emotion_losses_oracles() {
        let onehot = |i: i64| Tensor::from_slice(&[i]).one_hot(7).to_kind(Kind::Double);
        let l = emotion_gan_losses(&onehot(2), &onehot(6), &[2], &[4]).unwrap();
        assert!(l.d_loss.double_value(&[]).abs() < 1e-9);
        let l = emotion_gan_losses(&onehot(2), &onehot(4), &[2], &[4]).unwrap();
        assert!(l.g_loss.double_value(&[]).abs() < 1e-9);

        let uniform = Tensor::full([2, 7], 1.0 / 7.0, opts());
        let l = emotion_gan_losses(&uniform, &uniform, &[0, 5], &[1, 3]).unwrap();
        let ln7 = 7f64.ln();
        assert!((l.g_loss.double_value(&[]) - ln7).abs() < 1e-9);
        assert!((l.d_loss.double_value(&[]) - 2.0 * ln7).abs() < 1e-9);

        let zeros = Tensor::zeros([2, 7], opts());
        let l = emotion_gan_losses_logits(&zeros, &zeros, &[0, 5], &[1, 3]).unwrap();
        assert!((l.g_loss.double_value(&[]) - ln7).abs() < 1e-9);
        assert!(matches!(emotion_gan_losses(&uniform, &uniform, &[6, 0], &[0, 0]), Err(Error::EmotionIndex(6))));
    }

    #[test]
    fn objective_arithmetic() {
        let w = LossWeights::default();
        let t = |a, b, c, d| ObjectiveTerms { l1: a, perceptual: b, j_fd: c, j_ed: d };
        assert_eq!(generator_objective(t(0.0, 0.0, 0.0, 0.0), &w).unwrap(), 0.0);
        assert_eq!(generator_objective(t(1.0, 1.0, 1.0, 1.0), &w).unwrap(), 101.011);
        let base = generator_objective(t(0.3, 0.2, -0.5, 1.5), &w).unwrap();
        let doubled = generator_objective(t(0.6, 0.2, -0.5, 1.5), &w).unwrap();
        assert!((doubled - base - 30.0).abs() < 1e-9);
        assert!(matches!(generator_objective(t(f64::NAN, 0.0, 0.0, 0.0), &w), Err(Error::NonFiniteLoss { .. })));
    }

    #[test]
    fn objective_tensor_matches_scalar() {
        let w = LossWeights::default();
        let v = [0.25, 0.5, -1.5, 2.0];
        let ts: Vec<Tensor> = v.iter().map(|x| Tensor::from(*x)).collect();
        let got = generator_objective_tensor(&ts[0], &ts[1], &ts[2], &ts[3], &w).double_value(&[]);
        let want =
            generator_objective(ObjectiveTerms { l1: v[0], perceptual: v[1], j_fd: v[2], j_ed: v[3] }, &w).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn perceptual_identity_symmetry_and_contrast() {
        let e = FeatureExtractor::test_stub(5, Device::Cpu);
        let gray = Tensor::zeros([1, 3, 16, 16], opts());
        let checker = Tensor::arange(16, (Kind::Int64, Device::Cpu))
            .remainder(2)
            .view([1, 16])
            .bitwise_xor_tensor(&Tensor::arange(16, (Kind::Int64, Device::Cpu)).remainder(2).view([16, 1]))
            .to_kind(Kind::Double)
            * 2.0
            - 1.0;
        let checker = checker.view([1, 1, 16, 16]).expand([1, 3, 16, 16], false);
        let slight = &gray + 0.01;
        assert_eq!(perceptual_loss(&e, &gray, &gray).unwrap().double_value(&[]), 0.0);
        let a = perceptual_loss(&e, &gray, &checker).unwrap().double_value(&[]);
        let b = perceptual_loss(&e, &checker, &gray).unwrap().double_value(&[]);
        let c = perceptual_loss(&e, &gray, &slight).unwrap().double_value(&[]);
        assert!((a - b).abs() < 1e-12);
        assert!(a > c && c > 0.0);
    }
}
