//! The six-class video emotion classifier used to score generated videos.
//! Same network as the emotion discriminator, minus the fake class.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::{Device, Kind, Tensor};

use super::emotion_report::EmotionEvalReport;
use crate::config::{Config, Stage};
use crate::dataset::mrm::MrmOptions;
use crate::discriminators::EmotionNet;
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::losses::cross_entropy_logits;
use crate::optim::Adam;
use crate::training::checkpoint::{
    load_variables, named_variables, read_checkpoint, save_checkpoint, CheckpointKind, CheckpointMeta, RngState,
    FORMAT_VERSION,
};
use crate::training::data::{sample_batch, BatchSpec, ClipStore};
use crate::training::log::CsvLog;
use crate::video::Video8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRecord {
    pub iteration: u64,
    pub loss: f64,
    /// Fraction of the batch classified correctly before the update.
    pub accuracy: f64,
}

#[derive(Debug)]
pub struct TrainedClassifier {
    pub net: EmotionNet,
    pub records: Vec<ClassifierRecord>,
    rng: ChaCha8Rng,
}

/// Trains the classifier with cross-entropy on ground-truth windows from
/// `store`. Logs to `{out}/classifier_log.csv` when `out` is given.
pub fn train_emotion_classifier(
    store: &ClipStore,
    config: &Config,
    device: Device,
    out: Option<&Path>,
) -> Result<TrainedClassifier> {
    config.validate()?;
    let cc = &config.classifier;
    tch::manual_seed(cc.seed as i64);
    let net = EmotionNet::classifier(&config.model, device)?;
    let t = &config.train;
    let clip = (t.grad_clip > 0.0).then_some(t.grad_clip);
    let mut opt = Adam::new(&net.vs, cc.lr, t.adam_beta1, t.adam_beta2, t.adam_eps, clip);
    let mut rng = ChaCha8Rng::seed_from_u64(cc.seed);
    let spec = BatchSpec {
        batch_size: cc.batch_size,
        window: cc.window_frames,
        noise_dim: 1,
        mrm: MrmOptions::default(),
        augment: Some(&config.augment),
        device,
    };
    let mut log = out.map(|dir| CsvLog::open(&dir.join("classifier_log.csv"))).transpose()?;
    let mut records = Vec::new();
    for it in 1..=cc.iterations {
        let batch = sample_batch(store, &spec, &mut rng)?;
        let logits = net.logits(&batch.frames)?;
        let loss = cross_entropy_logits(&logits, &batch.labels);
        let loss_v = loss.double_value(&[]);
        if !loss_v.is_finite() {
            return Err(Error::NonFiniteLoss { term: "classifier_ce".into(), iteration: it });
        }
        let accuracy = accuracy(&logits, &batch.labels);
        opt.step(&loss)?;
        let rec = ClassifierRecord { iteration: it, loss: loss_v, accuracy };
        if let Some(log) = log.as_mut() {
            if it % cc.log_every.max(1) == 0 || it == cc.iterations {
                log.write(&rec)?;
            }
        }
        records.push(rec);
    }
    Ok(TrainedClassifier { net, records, rng })
}

fn accuracy(logits: &Tensor, labels: &[i64]) -> f64 {
    let pred = logits.detach().argmax(-1, false);
    let labels = Tensor::from_slice(labels).to_device(logits.device());
    pred.eq_tensor(&labels).to_kind(Kind::Double).mean(Kind::Double).double_value(&[])
}

impl TrainedClassifier {
    pub fn save(&self, path: &Path, config: &Config) -> Result<()> {
        let meta = CheckpointMeta {
            format_version: FORMAT_VERSION,
            kind: CheckpointKind::Classifier,
            config: config.clone(),
            stage: Stage::Init,
            iteration: self.records.len() as u64,
            rng: RngState::capture(&self.rng),
        };
        save_checkpoint(path, &meta, &named_variables(&self.net.vs, "classifier"))
    }
}

/// Loads a classifier checkpoint, rebuilding the network from its stored config.
pub fn load_classifier(path: &Path, device: Device) -> Result<(EmotionNet, CheckpointMeta)> {
    let ck = read_checkpoint(path)?;
    if ck.meta.kind != CheckpointKind::Classifier {
        return Err(Error::Config(format!("{} is not a classifier checkpoint", path.display())));
    }
    let mut net = EmotionNet::classifier(&ck.meta.config.model, device)?;
    load_variables(&mut net.vs, &ck.tensors, "classifier")?;
    Ok((net, ck.meta))
}

/// Predicted emotion for a whole video: the centered window of `window`
/// frames (the full video if shorter), matching the training input length.
pub fn classify(net: &EmotionNet, video: &Video8, window: usize) -> Result<Emotion> {
    if video.frames == 0 {
        return Err(Error::InvalidInput("empty video".into()));
    }
    let len = window.min(video.frames);
    let start = (video.frames - len) / 2;
    let _guard = tch::no_grad_guard();
    let frames = video.slice(start, len)?.to_tensor(net.vs.device()).unsqueeze(0);
    let logits = net.logits(&frames)?;
    Emotion::from_index(logits.argmax(-1, false).int64_value(&[0]))
}

/// Classifies every video and scores the predictions against `labels`.
pub fn evaluate_emotion_expression(
    net: &EmotionNet,
    videos: &[Video8],
    labels: &[Emotion],
    window: usize,
) -> Result<EmotionEvalReport> {
    if videos.len() != labels.len() {
        return Err(Error::Shape(format!("{} videos for {} labels", videos.len(), labels.len())));
    }
    let preds = videos.iter().map(|v| classify(net, v, window)).collect::<Result<Vec<_>>>()?;
    EmotionEvalReport::from_predictions(labels, &preds)
}
