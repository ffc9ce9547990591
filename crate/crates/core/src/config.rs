//! Declarative configuration: model topology, loss weights, training schedule,
//! augmentation and perceptual-extractor settings.
//!
//! Every section deserializes from TOML with defaults filled in, so a config
//! file only needs the keys it overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One 1-D convolution of the speech encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: i64,
    pub kernel: i64,
    pub stride: i64,
}

impl ConvSpec {
    pub const fn new(filters: i64, kernel: i64, stride: i64) -> Self {
        Self { filters, kernel, stride }
    }
}

/// Network widths. Only `speech_conv`, `image_filters` and `critic_filters`
/// are fixed by the reference architecture; the rest are implementation choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub speech_conv: Vec<ConvSpec>,
    /// Steps on each side of a kept speech step that the context layer concatenates.
    pub context_radius: i64,
    /// Decimation factor of the context layer (125 -> 25 steps per second).
    pub context_stride: i64,
    pub speech_fc: i64,
    pub speech_lstm_hidden: i64,
    pub speech_lstm_layers: i64,
    /// Filters of the six image-encoder convolutions; the decoder mirrors them.
    pub image_filters: Vec<i64>,
    pub emotion_fc: Vec<i64>,
    pub noise_dim: i64,
    pub noise_hidden: i64,
    pub decoder_fc: i64,
    pub critic_filters: Vec<i64>,
    pub critic_fc: i64,
    pub emotion_frame_fc: Vec<i64>,
    pub emotion_lstm_hidden: i64,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            speech_conv: vec![
                ConvSpec::new(64, 63, 4),
                ConvSpec::new(128, 31, 4),
                ConvSpec::new(256, 17, 2),
                ConvSpec::new(512, 9, 2),
                ConvSpec::new(16, 1, 1),
            ],
            context_radius: 2,
            context_stride: 5,
            speech_fc: 256,
            speech_lstm_hidden: 256,
            speech_lstm_layers: 2,
            image_filters: vec![64, 128, 256, 512, 512, 512],
            emotion_fc: vec![128, 128],
            noise_dim: 10,
            noise_hidden: 10,
            decoder_fc: 1024,
            critic_filters: vec![64, 128, 256, 512, 512],
            critic_fc: 512,
            emotion_frame_fc: vec![512, 256],
            emotion_lstm_hidden: 256,
            leaky_slope: 0.2,
        }
    }
}

impl ModelConfig {
    /// Width-reduced topology for tests and smoke runs. Kernel sizes, strides,
    /// layer counts and resolutions are unchanged.
    pub fn tiny() -> Self {
        Self {
            speech_conv: vec![
                ConvSpec::new(8, 63, 4),
                ConvSpec::new(8, 31, 4),
                ConvSpec::new(8, 17, 2),
                ConvSpec::new(8, 9, 2),
                ConvSpec::new(4, 1, 1),
            ],
            speech_fc: 16,
            speech_lstm_hidden: 16,
            image_filters: vec![4, 8, 8, 16, 16, 16],
            emotion_fc: vec![8, 8],
            noise_dim: 4,
            noise_hidden: 4,
            decoder_fc: 32,
            critic_filters: vec![4, 8, 8, 16, 16],
            critic_fc: 16,
            emotion_frame_fc: vec![16, 16],
            emotion_lstm_hidden: 16,
            ..Self::default()
        }
    }

    /// Audio samples consumed per speech-encoder step before the context layer.
    pub fn speech_hop(&self) -> i64 {
        self.speech_conv.iter().map(|c| c.stride).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.speech_conv.is_empty() {
            return Err(Error::Config("speech_conv must not be empty".into()));
        }
        if self.image_filters.len() != 6 {
            return Err(Error::Config("image_filters needs exactly 6 entries".into()));
        }
        if self.critic_filters.len() != 5 {
            return Err(Error::Config("critic_filters needs exactly 5 entries".into()));
        }
        if self.emotion_fc.is_empty() || self.emotion_frame_fc.len() != 2 {
            return Err(Error::Config("emotion_fc must be non-empty and emotion_frame_fc needs 2 entries".into()));
        }
        let hop = self.speech_hop() * self.context_stride;
        if hop != crate::video::SAMPLES_PER_FRAME as i64 {
            return Err(Error::Config(format!(
                "speech strides x context stride = {hop}, must equal {} samples per frame",
                crate::video::SAMPLES_PER_FRAME
            )));
        }
        let all_positive = self
            .speech_conv
            .iter()
            .flat_map(|c| [c.filters, c.kernel, c.stride])
            .chain(self.image_filters.iter().copied())
            .chain(self.critic_filters.iter().copied())
            .chain(self.emotion_fc.iter().copied())
            .chain(self.emotion_frame_fc.iter().copied())
            .chain([
                self.speech_fc,
                self.speech_lstm_hidden,
                self.speech_lstm_layers,
                self.noise_dim,
                self.noise_hidden,
                self.decoder_fc,
                self.critic_fc,
                self.emotion_lstm_hidden,
                self.context_stride,
            ])
            .all(|v| v > 0);
        if !all_positive || self.context_radius < 0 {
            return Err(Error::Config("all widths, kernels and strides must be positive".into()));
        }
        Ok(())
    }

    /// Keys whose values differ between two topologies, in sorted order.
    pub fn diff(&self, other: &ModelConfig) -> Vec<String> {
        let a = flatten_json(&serde_json::to_value(self).unwrap_or_default());
        let b = flatten_json(&serde_json::to_value(other).unwrap_or_default());
        let mut keys: Vec<String> = a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).cloned().collect();
        keys.sort();
        keys.dedup();
        keys
    }
}

fn flatten_json(value: &serde_json::Value) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            out.insert(k.clone(), v.to_string());
        }
    }
    out
}

/// Weights of the generator objective and of the critic's gradient penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub gp_lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 100.0, beta: 1.0, gamma: 0.01, delta: 0.001, gp_lambda: 10.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha, self.beta, self.gamma, self.delta, self.gp_lambda];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Init,
    Gan,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Init => "init",
            Stage::Gan => "gan",
        })
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "init" => Ok(Stage::Init),
            "gan" => Ok(Stage::Gan),
            _ => Err(Error::Config(format!("unknown stage {s:?}; expected init or gan"))),
        }
    }
}

/// Two-stage training schedule and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub init_iterations: u64,
    pub gan_iterations: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lr_generator_init: f64,
    pub lr_generator_gan: f64,
    pub lr_discriminators: f64,
    pub batch_size_init: usize,
    pub batch_size_gan: usize,
    pub window_frames: usize,
    pub grad_clip: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub log_every: u64,
    pub validate_every: u64,
    pub validation_windows: usize,
    pub checkpoint_every: u64,
    pub sample_every: u64,
    pub mrm_sigma_floor: f64,
    pub mrm_base_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Init,
            init_iterations: 100_000,
            gan_iterations: 100_000,
            adam_beta1: 0.5,
            adam_beta2: 0.99,
            adam_eps: 1e-8,
            lr_generator_init: 1e-4,
            lr_generator_gan: 1e-5,
            lr_discriminators: 1e-4,
            batch_size_init: 8,
            batch_size_gan: 4,
            window_frames: 32,
            grad_clip: 10.0,
            weights: LossWeights::default(),
            seed: 0,
            log_every: 10,
            validate_every: 1000,
            validation_windows: 8,
            checkpoint_every: 1000,
            sample_every: 1000,
            mrm_sigma_floor: 8.0,
            mrm_base_weight: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn iterations(&self) -> u64 {
        match self.stage {
            Stage::Init => self.init_iterations,
            Stage::Gan => self.gan_iterations,
        }
    }

    pub fn batch_size(&self) -> usize {
        match self.stage {
            Stage::Init => self.batch_size_init,
            Stage::Gan => self.batch_size_gan,
        }
    }

    pub fn lr_generator(&self) -> f64 {
        match self.stage {
            Stage::Init => self.lr_generator_init,
            Stage::Gan => self.lr_generator_gan,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.iterations() == 0 || self.batch_size() == 0 || self.window_frames == 0 {
            return Err(Error::Config("iterations, batch size and window must be positive".into()));
        }
        let lrs = [self.lr_generator_init, self.lr_generator_gan, self.lr_discriminators];
        if lrs.iter().any(|lr| !lr.is_finite() || *lr < 0.0) {
            return Err(Error::Config("learning rates must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.mrm_base_weight) || self.mrm_sigma_floor <= 0.0 {
            return Err(Error::Config("mrm_base_weight in [0,1], mrm_sigma_floor > 0".into()));
        }
        Ok(())
    }
}

/// Per-transform application probabilities and magnitudes for photometric jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub p_brightness: f64,
    pub brightness_limit: f64,
    pub p_contrast: f64,
    pub contrast_limit: f64,
    pub p_gamma: f64,
    /// Gamma range in percent, as `[low, high]`.
    pub gamma_limit: (f64, f64),
    pub p_hsv: f64,
    /// Hue shift limit in degrees.
    pub hue_limit: f64,
    pub saturation_limit: f64,
    pub value_limit: f64,
    pub p_clahe: f64,
    pub clahe_clip_limit: f64,
    pub clahe_tiles: usize,
    pub p_noise: f64,
    /// Standard deviation range of additive noise on the 8-bit scale.
    pub noise_std: (f64, f64),
    pub p_channel_shuffle: f64,
    pub p_rgb_shift: f64,
    /// Per-channel shift limit on the 8-bit scale.
    pub rgb_shift_limit: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_brightness: 0.5,
            brightness_limit: 0.2,
            p_contrast: 0.5,
            contrast_limit: 0.2,
            p_gamma: 0.5,
            gamma_limit: (80.0, 120.0),
            p_hsv: 0.5,
            hue_limit: 20.0,
            saturation_limit: 0.3,
            value_limit: 0.2,
            p_clahe: 0.2,
            clahe_clip_limit: 4.0,
            clahe_tiles: 8,
            p_noise: 0.3,
            noise_std: (3.0, 8.0),
            p_channel_shuffle: 0.1,
            p_rgb_shift: 0.3,
            rgb_shift_limit: 20.0,
        }
    }
}

impl AugmentConfig {
    /// Every transform disabled.
    pub fn disabled() -> Self {
        Self {
            p_brightness: 0.0,
            p_contrast: 0.0,
            p_gamma: 0.0,
            p_hsv: 0.0,
            p_clahe: 0.0,
            p_noise: 0.0,
            p_channel_shuffle: 0.0,
            p_rgb_shift: 0.0,
            ..Self::default()
        }
    }
}

/// Training schedule of the six-class evaluation classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub window_frames: usize,
    pub lr: f64,
    pub seed: u64,
    pub log_every: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { iterations: 20_000, batch_size: 8, window_frames: 32, lr: 1e-4, seed: 0, log_every: 10 }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 || self.window_frames == 0 {
            return Err(Error::Config("classifier iterations, batch size and window must be positive".into()));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::Config("classifier learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Which feature extractor backs the perceptual loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PerceptualConfig {
    /// 19-layer VGG feature stack with weights loaded from a file
    /// (`features.{i}.weight` / `features.{i}.bias`, safetensors or tch format).
    Vgg19 { weights: PathBuf },
    /// Small randomly initialized convolution stack; tests only.
    TestStub { seed: u64 },
    /// No perceptual term; tests only.
    Disabled,
}

impl Default for PerceptualConfig {
    fn default() -> Self {
        PerceptualConfig::Vgg19 { weights: PathBuf::from("vgg19.safetensors") }
    }
}

/// Complete experiment description as stored in config files and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub perceptual: PerceptualConfig,
    pub classifier: ClassifierConfig,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.classifier.validate()
    }

    /// Sets one dotted key, e.g. `train.weights.alpha = 50`. The value is read
    /// as a TOML literal, falling back to a plain string.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Config> {
        let mut root: toml::Table = toml::from_str(&self.to_toml_string()).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let parts: Vec<&str> = key.split('.').map(str::trim).collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("malformed key {key:?}")));
        }
        let (last, path) = parts.split_last().expect("split yields at least one part");
        let mut table = &mut root;
        for part in path {
            table = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{key}: {part} is not a table")))?;
        }
        table.insert(last.to_string(), parsed);
        let text = toml::to_string(&root).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("override {key}={value}: {e}")))
    }
}

/// Default training and classifier hyperparameters as `key = value` lines,
/// one per setting, with dotted keys as accepted by [`Config::with_override`].
pub fn default_hyperparameters() -> String {
    fn walk(prefix: &str, table: &toml::Table, out: &mut String) {
        for (k, v) in table {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                toml::Value::Table(t) => walk(&key, t, out),
                other => out.push_str(&format!("  {key} = {other}\n")),
            }
        }
    }
    let c = Config::default();
    let mut out = String::new();
    for (name, text) in [("train", toml::to_string(&c.train)), ("classifier", toml::to_string(&c.classifier))] {
        let table: toml::Table = toml::from_str(&text.expect("config serializes")).expect("round trip");
        walk(name, &table, &mut out);
    }
    out
}
