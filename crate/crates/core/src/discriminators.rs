//! Frame critic (WGAN-GP) and sequence-level emotion discriminator.

use tch::nn::{self, Module, RNN};
use tch::{Device, Kind, Tensor};

use crate::config::ModelConfig;
use crate::emotion::NUM_EMOTIONS;
use crate::error::{Error, Result};
use crate::nets::{check_dims, check_frames, conv3, lrelu, Mlp};
use crate::video::FRAME_SIZE;

/// Five stride-2 3×3 convolutions with leaky ReLU, flattened.
#[derive(Debug)]
pub struct ConvTrunk {
    convs: Vec<nn::Conv2D>,
    slope: f64,
    out_dim: i64,
}

impl ConvTrunk {
    pub fn new(vs: nn::Path, c_in: i64, filters: &[i64], slope: f64) -> Self {
        let mut convs = Vec::new();
        let mut c = c_in;
        for (i, &f) in filters.iter().enumerate() {
            convs.push(conv3(&vs / format!("conv{i}"), c, f, 2));
            c = f;
        }
        let side = FRAME_SIZE as i64 >> filters.len();
        Self { convs, slope, out_dim: c * side * side }
    }

    pub fn out_dim(&self) -> i64 {
        self.out_dim
    }

    /// Feature maps before flattening; `x` is `[N, C, 128, 128]`.
    pub fn feature_map(&self, x: &Tensor) -> Tensor {
        self.convs.iter().fold(x.shallow_clone(), |h, c| lrelu(&c.forward(&h), self.slope))
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.feature_map(x).flatten(1, -1)
    }
}

/// Scores each frame, conditioned on the identity image, with an unbounded scalar.
#[derive(Debug)]
pub struct FrameCritic {
    pub vs: nn::VarStore,
    trunk: ConvTrunk,
    fc1: nn::Linear,
    fc2: nn::Linear,
    slope: f64,
}

impl FrameCritic {
    pub fn new(cfg: &ModelConfig, device: Device) -> Result<Self> {
        cfg.validate()?;
        let vs = nn::VarStore::new(device);
        let root = vs.root();
        let trunk = ConvTrunk::new(&root / "trunk", 6, &cfg.critic_filters, cfg.leaky_slope);
        let fc1 = nn::linear(&root / "fc1", trunk.out_dim(), cfg.critic_fc, Default::default());
        let fc2 = nn::linear(&root / "fc2", cfg.critic_fc, 1, Default::default());
        Ok(Self { vs, trunk, fc1, fc2, slope: cfg.leaky_slope })
    }

    pub fn trunk(&self) -> &ConvTrunk {
        &self.trunk
    }

    /// `frames` `[B, T, 3, 128, 128]`, `condition` `[B, 3, 128, 128]`; returns `[B, T]`.
    pub fn forward(&self, frames: &Tensor, condition: &Tensor) -> Result<Tensor> {
        let (b, t) = check_frames(frames, 3, "critic frames")?;
        let c = check_dims(condition, 4, "critic condition")?;
        if c[0] != b || c[1..] != frames.size()[2..] {
            return Err(Error::Shape(format!("condition {c:?} does not match frames {:?}", frames.size())));
        }
        let cond = condition.unsqueeze(1).expand_as(frames);
        let x = Tensor::cat(&[frames, &cond], 2).flatten(0, 1);
        let h = lrelu(&self.fc1.forward(&self.trunk.forward(&x)), self.slope);
        Ok(self.fc2.forward(&h).view([b, t]))
    }
}

/// Per-frame conv trunk and FC, an LSTM over time, and a classifier on the
/// last step. Used with 7 classes (six emotions + fake) as the emotion
/// discriminator and with 6 classes as the evaluation classifier.
#[derive(Debug)]
pub struct EmotionNet {
    pub vs: nn::VarStore,
    trunk: ConvTrunk,
    frame_fc: Mlp,
    lstm: nn::LSTM,
    head: nn::Linear,
    classes: i64,
}

impl EmotionNet {
    pub fn new(cfg: &ModelConfig, classes: i64, device: Device) -> Result<Self> {
        cfg.validate()?;
        if classes < 2 {
            return Err(Error::Config("emotion network needs at least 2 classes".into()));
        }
        let vs = nn::VarStore::new(device);
        let root = vs.root();
        let trunk = ConvTrunk::new(&root / "trunk", 3, &cfg.critic_filters, cfg.leaky_slope);
        let frame_fc = Mlp::new(&root / "frame_fc", trunk.out_dim(), &cfg.emotion_frame_fc, cfg.leaky_slope);
        let width = *cfg.emotion_frame_fc.last().expect("validated");
        let lstm = nn::lstm(&root / "lstm", width, cfg.emotion_lstm_hidden, Default::default());
        let head = nn::linear(&root / "head", cfg.emotion_lstm_hidden, classes, Default::default());
        Ok(Self { vs, trunk, frame_fc, lstm, head, classes })
    }

    /// Emotion discriminator: six emotions plus the fake class.
    pub fn discriminator(cfg: &ModelConfig, device: Device) -> Result<Self> {
        Self::new(cfg, NUM_EMOTIONS as i64 + 1, device)
    }

    /// Evaluation classifier over the six emotions.
    pub fn classifier(cfg: &ModelConfig, device: Device) -> Result<Self> {
        Self::new(cfg, NUM_EMOTIONS as i64, device)
    }

    pub fn classes(&self) -> i64 {
        self.classes
    }

    /// Unnormalized class scores `[B, classes]` for `frames` `[B, T, 3, 128, 128]`.
    pub fn logits(&self, frames: &Tensor) -> Result<Tensor> {
        let (b, t) = check_frames(frames, 3, "emotion frames")?;
        if t < 1 {
            return Err(Error::Shape("emotion network needs at least one frame".into()));
        }
        let h = self.frame_fc.forward(&self.trunk.forward(&frames.flatten(0, 1)));
        let seq = h.view([b, t, -1]);
        let out = self.lstm.seq(&seq).0;
        Ok(self.head.forward(&out.select(1, t - 1)))
    }

    /// Class posterior `[B, classes]`.
    pub fn probs(&self, frames: &Tensor) -> Result<Tensor> {
        Ok(self.logits(frames)?.softmax(-1, Kind::Float))
    }
}
