//! Speech-, image-, emotion- and noise-conditioned talking-face generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tch::nn::{self, Module, RNN};
use tch::{Device, Kind, Tensor};

use crate::config::ModelConfig;
use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::nets::{check_dims, conv3, down2, lrelu, one_hot, up2, Mlp};
use crate::video::{FRAME_SIZE, SAMPLES_PER_FRAME};

/// 1-D conv stack, context layer, FC and LSTM: waveform -> one vector per video frame.
#[derive(Debug)]
pub struct SpeechEncoder {
    convs: Vec<nn::Conv1D>,
    fc: nn::Linear,
    lstm: nn::LSTM,
    radius: i64,
    stride: i64,
    hop: i64,
    slope: f64,
}

impl SpeechEncoder {
    pub fn new(vs: nn::Path, cfg: &ModelConfig) -> Self {
        let mut convs = Vec::new();
        let mut c_in = 1;
        for (i, spec) in cfg.speech_conv.iter().enumerate() {
            // Output length is exactly input / stride when the input is a multiple of the stride.
            let padding = (spec.kernel - spec.stride + 1).max(0) / 2;
            let conv_cfg = nn::ConvConfig { stride: spec.stride, padding, ..Default::default() };
            convs.push(nn::conv1d(&vs / format!("conv{i}"), c_in, spec.filters, spec.kernel, conv_cfg));
            c_in = spec.filters;
        }
        let context = c_in * (2 * cfg.context_radius + 1);
        let fc = nn::linear(&vs / "fc", context, cfg.speech_fc, Default::default());
        let lstm = nn::lstm(
            &vs / "lstm",
            cfg.speech_fc,
            cfg.speech_lstm_hidden,
            nn::RNNConfig { num_layers: cfg.speech_lstm_layers, batch_first: true, ..Default::default() },
        );
        Self {
            convs,
            fc,
            lstm,
            radius: cfg.context_radius,
            stride: cfg.context_stride,
            hop: cfg.speech_hop(),
            slope: cfg.leaky_slope,
        }
    }

    /// Samples consumed per output step.
    pub fn samples_per_step(&self) -> i64 {
        self.hop * self.stride
    }

    /// Conv features `[B, C, L]`, 125 steps per second.
    pub fn conv_features(&self, audio: &Tensor) -> Tensor {
        self.convs.iter().fold(audio.unsqueeze(1), |h, c| lrelu(&c.forward(&h), self.slope))
    }

    /// `audio` is `[B, N]` at 8 kHz; returns `[B, N / 320, hidden]`.
    ///
    /// Inputs that are not a multiple of 320 samples are zero-padded on the right.
    pub fn forward(&self, audio: &Tensor) -> Result<Tensor> {
        let s = check_dims(audio, 2, "audio")?;
        if s[1] == 0 {
            return Err(Error::InvalidInput("empty audio".into()));
        }
        let step = self.samples_per_step();
        let rem = s[1] % step;
        let audio = if rem == 0 {
            audio.shallow_clone()
        } else {
            log::debug!("padding {} audio samples to a multiple of {step}", s[1]);
            audio.constant_pad_nd([0, step - rem])
        };
        let feats = self.conv_features(&audio);
        let ctx = context_layer(&feats, self.radius, self.stride);
        let h = lrelu(&self.fc.forward(&ctx.transpose(1, 2)), self.slope);
        Ok(self.lstm.seq(&h).0)
    }
}

/// Concatenates each kept step with its `radius` neighbors on either side
/// (zero beyond the edges), keeping one step in `stride`.
///
/// `x` is `[B, C, L]`; the result is `[B, C * (2 radius + 1), L / stride]`, and
/// output step `j` is centered on input step `stride * j + stride / 2`.
pub fn context_layer(x: &Tensor, radius: i64, stride: i64) -> Tensor {
    let len = x.size()[2];
    let n = len / stride;
    let padded = x.constant_pad_nd([radius, radius]);
    let parts: Vec<Tensor> = (-radius..=radius)
        .map(|o| {
            let start = stride / 2 + o + radius;
            padded.slice(2, start, start + stride * (n - 1) + 1, stride)
        })
        .collect();
    Tensor::cat(&parts, 1)
}

/// Output of the image encoder: bottleneck vector plus skip maps, finest first.
#[derive(Debug)]
pub struct ImageEncoding {
    /// `[B, C]`.
    pub bottleneck: Tensor,
    /// `[B, C_i, 64 / 2^i, 64 / 2^i]` for `i` in `0..5`.
    pub skips: Vec<Tensor>,
}

/// Conv + nearest-neighbor downsampling encoder of the condition image.
#[derive(Debug)]
pub struct ImageEncoder {
    convs: Vec<nn::Conv2D>,
    bottleneck: nn::Conv2D,
    slope: f64,
}

impl ImageEncoder {
    pub fn new(vs: nn::Path, cfg: &ModelConfig) -> Self {
        let f = &cfg.image_filters;
        let mut convs = Vec::new();
        let mut c_in = 3;
        for (i, &c) in f[..5].iter().enumerate() {
            convs.push(conv3(&vs / format!("conv{i}"), c_in, c, 1));
            c_in = c;
        }
        let bottleneck = nn::conv2d(&vs / "conv5", c_in, f[5], 4, Default::default());
        Self { convs, bottleneck, slope: cfg.leaky_slope }
    }

    /// `image` is `[B, 3, 128, 128]` in `[-1, 1]`.
    pub fn forward(&self, image: &Tensor) -> Result<ImageEncoding> {
        let s = check_dims(image, 4, "condition image")?;
        let size = FRAME_SIZE as i64;
        if s[1] != 3 || s[2] != size || s[3] != size {
            return Err(Error::Shape(format!("condition image must be [B, 3, {size}, {size}], got {s:?}")));
        }
        let mut h = image.shallow_clone();
        let mut skips = Vec::with_capacity(5);
        for conv in &self.convs {
            h = down2(&lrelu(&conv.forward(&h), self.slope));
            skips.push(h.shallow_clone());
        }
        let bottleneck = lrelu(&self.bottleneck.forward(&h), self.slope).flatten(1, -1);
        Ok(ImageEncoding { bottleneck, skips })
    }
}

/// Two-layer FC embedding of a one-hot emotion, replicated over time.
#[derive(Debug)]
pub struct EmotionEncoder {
    mlp: Mlp,
}

impl EmotionEncoder {
    pub fn new(vs: nn::Path, cfg: &ModelConfig) -> Self {
        Self { mlp: Mlp::new(vs, NUM_EMOTIONS as i64, &cfg.emotion_fc, cfg.leaky_slope) }
    }

    /// `onehot` is `[B, 6]`; returns `[B, frames, D_e]` with identical rows.
    pub fn forward(&self, onehot: &Tensor, frames: i64) -> Tensor {
        let e = self.mlp.forward(onehot).unsqueeze(1);
        let d = e.size()[2];
        e.expand([-1, frames, d], false)
    }
}

/// Single-layer LSTM over per-frame Gaussian noise.
#[derive(Debug)]
pub struct NoiseEncoder {
    lstm: nn::LSTM,
}

impl NoiseEncoder {
    pub fn new(vs: nn::Path, cfg: &ModelConfig) -> Self {
        Self { lstm: nn::lstm(vs, cfg.noise_dim, cfg.noise_hidden, Default::default()) }
    }

    /// `noise` is `[B, T, Z]`.
    pub fn forward(&self, noise: &Tensor) -> Tensor {
        self.lstm.seq(noise).0
    }
}

/// Per-frame decoder: FC to a 4×4 map, then upsampling conv stages that
/// consume the image encoder's skip maps.
#[derive(Debug)]
pub struct VideoDecoder {
    fc1: nn::Linear,
    fc2: nn::Linear,
    map_channels: i64,
    /// Coarsest (4×4) first.
    stages: Vec<nn::Conv2D>,
    out: nn::Conv2D,
    slope: f64,
}

impl VideoDecoder {
    pub fn new(vs: nn::Path, cfg: &ModelConfig, input: i64) -> Self {
        let f = &cfg.image_filters;
        let map_channels = f[5];
        let fc1 = nn::linear(&vs / "fc1", input, cfg.decoder_fc, Default::default());
        let fc2 = nn::linear(&vs / "fc2", cfg.decoder_fc, map_channels * 16, Default::default());
        // Stage k runs at 4·2^k pixels and outputs f[5 - k] channels; stages 0..5
        // also take skip map 4 - k.
        let mut stages = Vec::new();
        let mut c = map_channels;
        for k in 0..6 {
            let skip = if k < 5 { f[4 - k] } else { 0 };
            let out = f[5 - k];
            stages.push(conv3(&vs / format!("up{k}"), c + skip, out, 1));
            c = out;
        }
        let out = conv3(&vs / "out", c, 3, 1);
        Self { fc1, fc2, map_channels, stages, out, slope: cfg.leaky_slope }
    }

    /// `z` is `[N, D]` (one row per frame); `skips[i]` is `[N, C_i, H_i, W_i]`.
    pub fn forward(&self, z: &Tensor, skips: &[Tensor]) -> Tensor {
        let h = lrelu(&self.fc1.forward(z), self.slope);
        let h = lrelu(&self.fc2.forward(&h), self.slope);
        let mut h = h.view([-1, self.map_channels, 4, 4]);
        for (k, conv) in self.stages.iter().enumerate() {
            if k > 0 {
                h = up2(&h);
            }
            if k < 5 {
                h = Tensor::cat(&[&h, &skips[4 - k]], 1);
            }
            h = lrelu(&conv.forward(&h), self.slope);
        }
        self.out.forward(&h).tanh()
    }
}

/// Result of [`Generator::generate`].
#[derive(Debug)]
pub struct Generated {
    /// `[T, 3, 128, 128]` in `[-1, 1]`.
    pub video: Tensor,
    /// Zero samples appended to reach a whole number of frames.
    pub padded_samples: usize,
}

#[derive(Debug)]
pub struct Generator {
    pub vs: nn::VarStore,
    pub cfg: ModelConfig,
    pub speech: SpeechEncoder,
    pub image: ImageEncoder,
    pub emotion: EmotionEncoder,
    pub noise: NoiseEncoder,
    pub decoder: VideoDecoder,
}

impl Generator {
    pub fn new(cfg: &ModelConfig, device: Device) -> Result<Self> {
        cfg.validate()?;
        let vs = nn::VarStore::new(device);
        let root = vs.root();
        let speech = SpeechEncoder::new(&root / "speech", cfg);
        let image = ImageEncoder::new(&root / "image", cfg);
        let emotion = EmotionEncoder::new(&root / "emotion", cfg);
        let noise = NoiseEncoder::new(&root / "noise", cfg);
        let emotion_dim = *cfg.emotion_fc.last().expect("validated");
        let input = cfg.speech_lstm_hidden + cfg.image_filters[5] + emotion_dim + cfg.noise_hidden;
        let decoder = VideoDecoder::new(&root / "decoder", cfg, input);
        Ok(Self { vs, cfg: cfg.clone(), speech, image, emotion, noise, decoder })
    }

    pub fn device(&self) -> Device {
        self.vs.device()
    }

    /// Concatenates the four embeddings and decodes every frame.
    ///
    /// `speech`, `emotion` and `noise` are `[B, T, D_*]`; returns `[B, T, 3, 128, 128]`.
    pub fn decode(&self, speech: &Tensor, image: &ImageEncoding, emotion: &Tensor, noise: &Tensor) -> Result<Tensor> {
        let (b, t) = (speech.size()[0], speech.size()[1]);
        for (name, x) in [("emotion", emotion), ("noise", noise)] {
            let s = x.size();
            if s.len() != 3 || s[0] != b || s[1] != t {
                return Err(Error::Shape(format!(
                    "{name} embedding is {s:?}, speech embedding has batch {b} and {t} frames"
                )));
            }
        }
        if image.bottleneck.size()[0] != b {
            return Err(Error::Shape("image batch differs from speech batch".into()));
        }
        let per_frame = |x: &Tensor| {
            let s = x.size();
            let mut shape = vec![b, t];
            shape.extend_from_slice(&s[1..]);
            let mut flat = vec![b * t];
            flat.extend_from_slice(&s[1..]);
            x.unsqueeze(1).expand(shape.as_slice(), false).reshape(flat.as_slice())
        };
        let bottleneck = image.bottleneck.unsqueeze(1).expand([b, t, -1], false);
        let z = Tensor::cat(&[speech, &bottleneck, emotion, noise], 2).reshape([b * t, -1]);
        let skips: Vec<Tensor> = image.skips.iter().map(per_frame).collect();
        let video = self.decoder.forward(&z, &skips);
        let s = video.size();
        Ok(video.view([b, t, s[1], s[2], s[3]]))
    }

    /// Full forward pass.
    ///
    /// `audio` `[B, N]`, `image` `[B, 3, 128, 128]`, `emotion` one-hot `[B, 6]`,
    /// `noise` `[B, N / 320, Z]`.
    pub fn forward(&self, audio: &Tensor, image: &Tensor, emotion: &Tensor, noise: &Tensor) -> Result<Tensor> {
        let speech = self.speech.forward(audio)?;
        let t = speech.size()[1];
        let e = check_dims(emotion, 2, "emotion")?;
        if e[1] != NUM_EMOTIONS as i64 {
            return Err(Error::Shape(format!("emotion must be one-hot [B, 6], got {e:?}")));
        }
        let enc = self.image.forward(image)?;
        let emo = self.emotion.forward(emotion, t);
        let n = check_dims(noise, 3, "noise")?;
        if n[2] != self.cfg.noise_dim {
            return Err(Error::Shape(format!("noise width {} != {}", n[2], self.cfg.noise_dim)));
        }
        let noise = self.noise.forward(noise);
        self.decode(&speech, &enc, &emo, &noise)
    }

    /// Generates a video for one utterance. Audio is zero-padded to a whole
    /// number of frames; noise is drawn from `noise_seed`.
    pub fn generate(&self, audio: &[f32], image: &Tensor, emotion: Emotion, noise_seed: u64) -> Result<Generated> {
        if audio.is_empty() {
            return Err(Error::InvalidInput("empty audio".into()));
        }
        let frames = audio.len().div_ceil(SAMPLES_PER_FRAME);
        let padded_samples = frames * SAMPLES_PER_FRAME - audio.len();
        let mut samples = audio.to_vec();
        samples.resize(frames * SAMPLES_PER_FRAME, 0.0);
        let device = self.device();
        let image = match image.dim() {
            3 => image.unsqueeze(0),
            _ => image.shallow_clone(),
        };
        let _guard = tch::no_grad_guard();
        let video = self.forward(
            &Tensor::from_slice(&samples).to_device(device).unsqueeze(0),
            &image.to_device(device).to_kind(Kind::Float),
            &emotion_onehot(&[emotion], device),
            &noise_tensor(1, frames, self.cfg.noise_dim as usize, noise_seed, device),
        )?;
        Ok(Generated { video: video.squeeze_dim(0), padded_samples })
    }
}

pub fn emotion_onehot(labels: &[Emotion], device: Device) -> Tensor {
    let idx: Vec<i64> = labels.iter().map(|e| e.index() as i64).collect();
    one_hot(&idx, NUM_EMOTIONS as i64, device)
}

/// Standard-normal noise `[batch, frames, dim]` from a seeded ChaCha stream.
pub fn noise_tensor(batch: usize, frames: usize, dim: usize, seed: u64, device: Device) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f32> = (0..batch * frames * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::from_slice(&v).view([batch as i64, frames as i64, dim as i64]).to_device(device)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Generator {
        tch::manual_seed(0);
        Generator::new(&ModelConfig::tiny(), Device::Cpu).unwrap()
    }

    fn image(seed: i64) -> Tensor {
        tch::manual_seed(seed);
        Tensor::rand([1, 3, 128, 128], (Kind::Float, Device::Cpu)) * 2.0 - 1.0
    }

    #[test]
    fn speech_rate_law() {
        let g = tiny();
        for n in [1, 2, 25, 32] {
            let a = Tensor::zeros([1, n * 320], (Kind::Float, Device::Cpu));
            let e = g.speech.forward(&a).unwrap();
            assert_eq!(e.size(), vec![1, n, 16]);
            assert!(bool::try_from(e.isfinite().all()).unwrap());
        }
        let conv = g.speech.conv_features(&Tensor::zeros([1, 8000], (Kind::Float, Device::Cpu)));
        assert_eq!(conv.size()[2], 125);
    }

    #[test]
    fn context_layer_matches_reshape() {
        let x = Tensor::arange(2 * 3 * 20, (Kind::Float, Device::Cpu)).view([2, 3, 20]);
        let ctx = context_layer(&x, 2, 5);
        assert_eq!(ctx.size(), vec![2, 15, 4]);
        // Block o of the channels is x shifted by o - 2 around centers 5j + 2.
        for j in 0..4 {
            for o in 0..5 {
                for c in 0..3 {
                    let got = ctx.int64_value(&[1, o * 3 + c, j]);
                    assert_eq!(got, x.int64_value(&[1, c, 5 * j + o]));
                }
            }
        }
    }

    #[test]
    fn context_layer_zero_pads_edges() {
        let x = Tensor::ones([1, 1, 6], (Kind::Float, Device::Cpu));
        let ctx = context_layer(&x, 3, 2);
        assert_eq!(ctx.size(), vec![1, 7, 3]);
        // Center of step 0 is index 1, so offsets -3 and -2 fall off the left edge.
        assert_eq!(ctx.double_value(&[0, 0, 0]), 0.0);
        assert_eq!(ctx.double_value(&[0, 1, 0]), 0.0);
        assert_eq!(ctx.double_value(&[0, 2, 0]), 1.0);
        assert_eq!(ctx.double_value(&[0, 6, 2]), 0.0);
    }

    #[test]
    fn image_encoding_shapes() {
        let g = tiny();
        let enc = g.image.forward(&image(1)).unwrap();
        let f = &g.cfg.image_filters;
        let shapes: Vec<Vec<i64>> = enc.skips.iter().map(|s| s.size()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![1, f[0], 64, 64],
                vec![1, f[1], 32, 32],
                vec![1, f[2], 16, 16],
                vec![1, f[3], 8, 8],
                vec![1, f[4], 4, 4]
            ]
        );
        assert_eq!(enc.bottleneck.size(), vec![1, f[5]]);
        assert!(g.image.forward(&Tensor::zeros([1, 3, 64, 64], (Kind::Float, Device::Cpu))).is_err());
    }

    #[test]
    fn emotion_rows_replicated_and_label_dependent() {
        let g = tiny();
        let a = g.emotion.forward(&emotion_onehot(&[Emotion::Anger], Device::Cpu), 32);
        let one = g.emotion.forward(&emotion_onehot(&[Emotion::Anger], Device::Cpu), 1);
        assert_eq!(a.size(), vec![1, 32, 8]);
        for t in 0..32 {
            assert!(a.get(0).get(t).equal(&one.get(0).get(0)));
        }
        let b = g.emotion.forward(&emotion_onehot(&[Emotion::Sadness], Device::Cpu), 1);
        assert!(!one.equal(&b));
    }

    #[test]
    fn noise_encoder_is_causal() {
        let g = tiny();
        let n = noise_tensor(1, 6, 4, 3, Device::Cpu);
        let m = n.copy();
        let _ = m.get(0).get(3).fill_(5.0);
        let (a, b) = (g.noise.forward(&n), g.noise.forward(&m));
        for t in 0..6 {
            let same = a.get(0).get(t).equal(&b.get(0).get(t));
            assert_eq!(same, t < 3, "step {t}");
        }
        assert!(g.noise.forward(&n).equal(&a));
    }

    #[test]
    fn generate_shape_range_and_determinism() {
        let g = tiny();
        let audio: Vec<f32> = (0..2 * 10240).map(|i| (i as f32 * 0.05).sin() * 0.3).collect();
        let out = g.generate(&audio, &image(2), Emotion::Fear, 7).unwrap();
        assert_eq!(out.video.size(), vec![64, 3, 128, 128]);
        assert_eq!(out.padded_samples, 0);
        assert!(out.video.abs().max().double_value(&[]) <= 1.0);
        let again = g.generate(&audio, &image(2), Emotion::Fear, 7).unwrap();
        assert!(out.video.equal(&again.video));

        let odd = g.generate(&audio[..1000], &image(2), Emotion::Fear, 7).unwrap();
        assert_eq!(odd.video.size()[0], 4);
        assert_eq!(odd.padded_samples, 280);
    }

    #[test]
    fn skips_and_emotion_paths_are_live() {
        let g = tiny();
        let audio = Tensor::randn([1, 640], (Kind::Float, Device::Cpu));
        let img = image(4);
        let noise = noise_tensor(1, 2, 4, 1, Device::Cpu);
        let onehot = emotion_onehot(&[Emotion::Happiness], Device::Cpu).set_requires_grad(true);
        let out = g.forward(&audio, &img, &onehot, &noise).unwrap();
        let grad = Tensor::run_backward(&[out.mean(Kind::Float)], &[&onehot], false, false);
        assert!(grad[0].abs().sum(Kind::Float).double_value(&[]) > 0.0);

        let _guard = tch::no_grad_guard();
        let speech = g.speech.forward(&audio).unwrap();
        let emo = g.emotion.forward(&onehot, 2);
        let nz = g.noise.forward(&noise);
        let enc = g.image.forward(&img).unwrap();
        let base = g.decode(&speech, &enc, &emo, &nz).unwrap();
        let ablated = ImageEncoding {
            bottleneck: enc.bottleneck.shallow_clone(),
            skips: enc.skips.iter().map(|s| s.zeros_like()).collect(),
        };
        let cut = g.decode(&speech, &ablated, &emo, &nz).unwrap();
        assert!(!base.equal(&cut));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let g = tiny();
        let audio = Tensor::zeros([1, 640], (Kind::Float, Device::Cpu));
        let noise = noise_tensor(1, 3, 4, 1, Device::Cpu);
        let onehot = emotion_onehot(&[Emotion::Neutral], Device::Cpu);
        assert!(matches!(g.forward(&audio, &image(0), &onehot, &noise), Err(Error::Shape(_))));
    }
}
