//! Frozen feature extractors for the perceptual loss.

use std::collections::HashMap;
use std::path::Path;

use tch::{Device, Kind, Tensor};

use crate::config::PerceptualConfig;
use crate::error::{Error, Result};

/// Indices into the sequential VGG-19 feature stack after which features are
/// tapped: the output of the first `i` layers, i.e. relu1_2, relu2_2, relu3_4,
/// relu4_4 and relu5_4.
pub const VGG19_TAPS: [usize; 5] = [4, 9, 18, 27, 36];

const VGG19_LAYOUT: [i64; 21] =
    [64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0];
const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug)]
enum Layer {
    Conv { weight: Tensor, bias: Tensor },
    Relu,
    MaxPool,
}

/// A sequential conv/ReLU/max-pool stack with frozen weights and feature taps.
#[derive(Debug)]
pub struct FeatureExtractor {
    layers: Vec<Layer>,
    taps: Vec<usize>,
}

impl FeatureExtractor {
    /// VGG-19 `features` loaded from a safetensors or libtorch file holding
    /// `features.{i}.weight` / `features.{i}.bias`.
    pub fn vgg19(weights: &Path, device: Device) -> Result<Self> {
        if !weights.is_file() {
            return Err(Error::Config(format!("perceptual extractor weights not found at {}", weights.display())));
        }
        let named = match weights.extension().and_then(|e| e.to_str()) {
            Some("safetensors") => Tensor::read_safetensors(weights)?,
            _ => Tensor::load_multi(weights)?,
        };
        let mut map: HashMap<String, Tensor> = named.into_iter().collect();
        let mut layers = Vec::new();
        let mut c_in = 3;
        for &c in &VGG19_LAYOUT {
            if c == 0 {
                layers.push(Layer::MaxPool);
                continue;
            }
            let i = layers.len();
            let mut take = |name: String, shape: &[i64]| -> Result<Tensor> {
                let t = map.remove(&name).ok_or_else(|| Error::format(weights, format!("missing tensor {name}")))?;
                if t.size() != shape {
                    return Err(Error::format(weights, format!("{name} has shape {:?}, want {shape:?}", t.size())));
                }
                Ok(t.to_kind(Kind::Float).to_device(device).set_requires_grad(false))
            };
            let weight = take(format!("features.{i}.weight"), &[c, c_in, 3, 3])?;
            let bias = take(format!("features.{i}.bias"), &[c])?;
            layers.push(Layer::Conv { weight, bias });
            layers.push(Layer::Relu);
            c_in = c;
        }
        Ok(Self { layers, taps: VGG19_TAPS.to_vec() })
    }

    /// Two small randomly initialized conv blocks, deterministic in `seed`.
    /// Stands in for the pretrained network in tests.
    pub fn test_stub(seed: u64, device: Device) -> Self {
        let _guard = tch::no_grad_guard();
        tch::manual_seed(seed as i64);
        let conv = |c_out: i64, c_in: i64| Layer::Conv {
            weight: (Tensor::randn([c_out, c_in, 3, 3], (Kind::Float, device)) * (2.0 / (9 * c_in) as f64).sqrt()),
            bias: Tensor::randn([c_out], (Kind::Float, device)) * 0.1,
        };
        let layers = vec![conv(4, 3), Layer::Relu, Layer::MaxPool, conv(6, 4), Layer::Relu];
        Self { layers, taps: vec![2, 5] }
    }

    pub fn from_config(cfg: &PerceptualConfig, device: Device) -> Result<Option<Self>> {
        match cfg {
            PerceptualConfig::Vgg19 { weights } => Self::vgg19(weights, device).map(Some),
            PerceptualConfig::TestStub { seed } => Ok(Some(Self::test_stub(*seed, device))),
            PerceptualConfig::Disabled => Ok(None),
        }
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    /// Features at every tap for images `[N, 3, H, W]` in `[-1, 1]`.
    pub fn features(&self, images: &Tensor) -> Vec<Tensor> {
        let kind = images.kind();
        let device = images.device();
        let mean = Tensor::from_slice(&IMAGENET_MEAN).to_kind(kind).to_device(device).view([1, 3, 1, 1]);
        let std = Tensor::from_slice(&IMAGENET_STD).to_kind(kind).to_device(device).view([1, 3, 1, 1]);
        let mut h = ((images + 1.0) / 2.0 - mean) / std;
        let last = *self.taps.iter().max().unwrap_or(&0);
        let mut out = Vec::with_capacity(self.taps.len());
        for (i, layer) in self.layers.iter().enumerate().take(last) {
            h = match layer {
                Layer::Conv { weight, bias } => {
                    h.conv2d(&weight.to_kind(kind), Some(&bias.to_kind(kind)), [1, 1], [1, 1], [1, 1], 1)
                }
                Layer::Relu => h.relu(),
                Layer::MaxPool => h.max_pool2d([2, 2], [2, 2], [0, 0], [1, 1], false),
            };
            if self.taps.contains(&(i + 1)) {
                out.push(h.shallow_clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_taps_and_shapes() {
        let e = FeatureExtractor::test_stub(1, Device::Cpu);
        let f = e.features(&Tensor::zeros([2, 3, 16, 16], (Kind::Float, Device::Cpu)));
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].size(), vec![2, 4, 16, 16]);
        assert_eq!(f[1].size(), vec![2, 6, 8, 8]);
    }

    #[test]
    fn stub_is_deterministic_and_accepts_double() {
        let x = Tensor::rand([1, 3, 8, 8], (Kind::Double, Device::Cpu));
        let a = FeatureExtractor::test_stub(3, Device::Cpu).features(&x);
        let b = FeatureExtractor::test_stub(3, Device::Cpu).features(&x);
        assert_eq!(a[1].kind(), Kind::Double);
        assert!(a[1].equal(&b[1]));
    }

    #[test]
    fn vgg_loader_checks_file_and_names() {
        let missing = FeatureExtractor::vgg19(Path::new("/nonexistent/vgg19.safetensors"), Device::Cpu);
        assert!(matches!(missing, Err(Error::Config(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.safetensors");
        let w = Tensor::zeros([64, 3, 3, 3], (Kind::Float, Device::Cpu));
        Tensor::write_safetensors(&[("features.0.weight", &w)], &path).unwrap();
        let err = FeatureExtractor::vgg19(&path, Device::Cpu).unwrap_err().to_string();
        assert!(err.contains("features.0.bias"), "{err}");
    }

    #[test]
    fn vgg_layout_puts_taps_after_block_activations() {
        // Build the layer list alone (weights irrelevant) and check tap positions.
        let mut kinds = Vec::new();
        for &c in &VGG19_LAYOUT {
            if c == 0 {
                kinds.push('M');
            } else {
                kinds.extend(['C', 'R']);
            }
        }
        assert_eq!(kinds.len(), 37);
        for tap in VGG19_TAPS {
            assert_eq!(kinds[tap - 1], 'R');
            assert!(tap == 36 || kinds[tap] == 'M');
        }
    }
}
