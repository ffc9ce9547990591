//! Adam with explicit, serializable moment state and global-norm clipping.
//!
//! Gradients are taken only w.r.t. the optimizer's own parameters, so a step
//! on one network never touches another network's parameters or gradients.

use std::collections::HashMap;

use tch::{nn, Kind, Tensor};

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm limit; `None` disables clipping.
    pub clip: Option<f64>,
    names: Vec<String>,
    params: Vec<Tensor>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    steps: Vec<u64>,
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

impl Adam {
    pub fn new(vs: &nn::VarStore, lr: f64, beta1: f64, beta2: f64, eps: f64, clip: Option<f64>) -> Self {
        let mut named: Vec<(String, Tensor)> = vs.variables().into_iter().collect();
        named.sort_by(|a, b| a.0.cmp(&b.0));
        let (names, params): (Vec<_>, Vec<_>) = named.into_iter().unzip();
        let m = params.iter().map(|p| p.zeros_like().detach()).collect();
        let v = params.iter().map(|p| p.zeros_like().detach()).collect();
        let steps = vec![0; params.len()];
        Self { lr, beta1, beta2, eps, clip, names, params, m, v, steps }
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Differentiates `loss` w.r.t. the parameters and applies one update.
    pub fn step(&mut self, loss: &Tensor) -> Result<StepInfo> {
        let grads = Tensor::f_run_backward(&[loss], &self.params, false, false)?;
        self.apply(grads)
    }

    /// Applies precomputed gradients (undefined entries leave that parameter untouched).
    pub fn apply(&mut self, grads: Vec<Tensor>) -> Result<StepInfo> {
        if grads.len() != self.params.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), self.params.len())));
        }
        let _guard = tch::no_grad_guard();
        let sq: f64 = grads
            .iter()
            .filter(|g| g.defined())
            .map(|g| g.to_kind(Kind::Double).square().sum(Kind::Double).double_value(&[]))
            .sum();
        let grad_norm = sq.sqrt();
        let scale = match self.clip {
            Some(c) if grad_norm > c => c / (grad_norm + 1e-6),
            _ => 1.0,
        };
        for (i, g) in grads.into_iter().enumerate() {
            if !g.defined() {
                continue;
            }
            let g = if scale != 1.0 { g * scale } else { g };
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            self.m[i] = &self.m[i] * self.beta1 + &g * (1.0 - self.beta1);
            self.v[i] = &self.v[i] * self.beta2 + g.square() * (1.0 - self.beta2);
            if self.lr == 0.0 {
                continue;
            }
            let m_hat = &self.m[i] / (1.0 - self.beta1.powi(t));
            let v_hat = &self.v[i] / (1.0 - self.beta2.powi(t));
            let update = m_hat / (v_hat.sqrt() + self.eps) * self.lr;
            let _ = self.params[i].f_sub_(&update)?;
        }
        Ok(StepInfo { grad_norm, clipped: scale != 1.0 })
    }

    /// Moment tensors and step counts under `{prefix}.{param}.m|v|step`.
    pub fn named_state(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(3 * self.params.len());
        for (i, name) in self.names.iter().enumerate() {
            out.push((format!("{prefix}.{name}.m"), self.m[i].shallow_clone()));
            out.push((format!("{prefix}.{name}.v"), self.v[i].shallow_clone()));
            out.push((format!("{prefix}.{name}.step"), Tensor::from(self.steps[i] as i64)));
        }
        out
    }

    pub fn load_state(&mut self, tensors: &HashMap<String, Tensor>, prefix: &str) -> Result<()> {
        let _guard = tch::no_grad_guard();
        let mut missing = Vec::new();
        for (i, name) in self.names.iter().enumerate() {
            let key = |s: &str| format!("{prefix}.{name}.{s}");
            match (tensors.get(&key("m")), tensors.get(&key("v")), tensors.get(&key("step"))) {
                (Some(m), Some(v), Some(step)) if m.size() == self.m[i].size() && v.size() == self.v[i].size() => {
                    let dev = self.params[i].device();
                    self.m[i] = m.to_kind(self.m[i].kind()).to_device(dev);
                    self.v[i] = v.to_kind(self.v[i].kind()).to_device(dev);
                    self.steps[i] = step.int64_value(&[]) as u64;
                }
                _ => missing.push(key("*")),
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::TopologyMismatch(missing))
        }
    }
}

#[cfg(test)]
mod tests {
    use tch::Device;

    use super::*;

    fn quadratic() -> (nn::VarStore, Tensor) {
        let vs = nn::VarStore::new(Device::Cpu);
        let w = vs.root().var("w", &[3], nn::Init::Const(1.0));
        (vs, w)
    }

    #[test]
    fn first_step_matches_closed_form() {
        let (vs, w) = quadratic();
        let mut opt = Adam::new(&vs, 0.1, 0.5, 0.99, 1e-8, None);
        // d/dw sum(w^2) = 2w = 2; first Adam step moves by lr * g / (|g| + eps) ~= lr.
        opt.step(&(&w * &w).sum(Kind::Float)).unwrap();
        let got = Vec::<f32>::try_from(&w).unwrap();
        assert!(got.iter().all(|x| (x - 0.9).abs() < 1e-6), "{got:?}");
    }

    #[test]
    fn zero_lr_leaves_parameters_bit_identical() {
        let (vs, w) = quadratic();
        let before = w.copy();
        let mut opt = Adam::new(&vs, 0.0, 0.5, 0.99, 1e-8, Some(10.0));
        for _ in 0..3 {
            opt.step(&(&w * &w).sum(Kind::Float)).unwrap();
        }
        assert!(w.equal(&before));
    }

    #[test]
    fn clipping_scales_large_gradients() {
        let (vs, w) = quadratic();
        let mut opt = Adam::new(&vs, 0.1, 0.5, 0.99, 1e-8, Some(1.0));
        let info = opt.step(&(&w * 100.0).sum(Kind::Float)).unwrap();
        assert!(info.clipped);
        assert!((info.grad_norm - 100.0 * 3f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn only_own_parameters_change() {
        let (vs_a, a) = quadratic();
        let (_vs_b, b) = quadratic();
        let b_before = b.copy();
        let mut opt = Adam::new(&vs_a, 0.1, 0.5, 0.99, 1e-8, None);
        opt.step(&(&a * &b).sum(Kind::Float)).unwrap();
        assert!(b.equal(&b_before));
        assert!(!b.grad().defined() || b.grad().abs().sum(Kind::Float).double_value(&[]) == 0.0);
    }

    #[test]
    fn state_round_trip() {
        let (vs, w) = quadratic();
        let mut opt = Adam::new(&vs, 0.1, 0.5, 0.99, 1e-8, None);
        opt.step(&(&w * &w).sum(Kind::Float)).unwrap();
        let state: HashMap<String, Tensor> = opt.named_state("g").into_iter().collect();
        let (vs2, _) = quadratic();
        let mut other = Adam::new(&vs2, 0.1, 0.5, 0.99, 1e-8, None);
        other.load_state(&state, "g").unwrap();
        assert!(other.m[0].equal(&opt.m[0]) && other.v[0].equal(&opt.v[0]));
        assert_eq!(other.steps, opt.steps);
        assert!(matches!(other.load_state(&state, "x"), Err(Error::TopologyMismatch(_))));
    }
}
