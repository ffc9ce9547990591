//! The two-stage training loop.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tch::{Device, Kind, Tensor};

use super::checkpoint::{
    check_topology, load_variables, named_variables, read_checkpoint, save_checkpoint, Checkpoint, CheckpointKind,
    CheckpointMeta, RngState, FORMAT_VERSION,
};
use super::data::{sample_batch, validation_batch, Batch, BatchSpec, ClipStore};
use super::log::{read_log, write_sample_grid, CsvLog, StepRecord, ValidationRecord};
use crate::config::{Config, LossWeights, Stage};
use crate::dataset::mrm::MrmOptions;
use crate::discriminators::{EmotionNet, FrameCritic};
use crate::emotion::FAKE_CLASS;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::losses::{
    cross_entropy_logits, emotion_gan_losses_logits, generator_objective_tensor, gradient_penalty, mrm_l1,
    perceptual_loss, wgan_critic_step_loss, wgan_generator_loss, ObjectiveTerms,
};
use crate::optim::Adam;
use crate::perceptual::FeatureExtractor;

pub const LOG_FILE: &str = "train_log.csv";
pub const VAL_LOG_FILE: &str = "val_log.csv";
pub const LAST_CHECKPOINT: &str = "checkpoints/last.safetensors";
pub const BEST_CHECKPOINT: &str = "checkpoints/best.safetensors";

/// Generator, critic, emotion discriminator and their optimizers.
#[derive(Debug)]
pub struct Trainer {
    pub config: Config,
    pub device: Device,
    pub generator: Generator,
    pub critic: FrameCritic,
    pub emotion_disc: EmotionNet,
    extractor: Option<FeatureExtractor>,
    opt_g: Adam,
    opt_c: Adam,
    opt_e: Adam,
    rng: ChaCha8Rng,
    /// Completed iterations of the current stage.
    pub iteration: u64,
}

#[derive(Debug)]
pub struct RunSummary {
    pub iteration: u64,
    /// Every step of this run, in order.
    pub records: Vec<StepRecord>,
    pub validations: Vec<ValidationRecord>,
    pub last_checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
}

fn finite(term: &str, t: &Tensor, iteration: u64) -> Result<f64> {
    let v = t.double_value(&[]);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss { term: term.into(), iteration })
    }
}

fn spec_for(config: &Config, device: Device) -> BatchSpec<'_> {
    let t = &config.train;
    BatchSpec {
        batch_size: t.batch_size(),
        window: t.window_frames,
        noise_dim: config.model.noise_dim as usize,
        mrm: MrmOptions { sigma_floor: t.mrm_sigma_floor, base: t.mrm_base_weight },
        augment: Some(&config.augment),
        device,
    }
}

impl Trainer {
    /// Fresh networks initialized from `config.train.seed`.
    pub fn new(config: Config, device: Device) -> Result<Self> {
        config.validate()?;
        tch::manual_seed(config.train.seed as i64);
        let generator = Generator::new(&config.model, device)?;
        let critic = FrameCritic::new(&config.model, device)?;
        let emotion_disc = EmotionNet::discriminator(&config.model, device)?;
        let extractor = if config.train.weights.beta > 0.0 {
            FeatureExtractor::from_config(&config.perceptual, device)?
        } else {
            None
        };
        let t = &config.train;
        let clip = (t.grad_clip > 0.0).then_some(t.grad_clip);
        let adam = |vs, lr| Adam::new(vs, lr, t.adam_beta1, t.adam_beta2, t.adam_eps, clip);
        let opt_g = adam(&generator.vs, t.lr_generator());
        let opt_c = adam(&critic.vs, t.lr_discriminators);
        let opt_e = adam(&emotion_disc.vs, t.lr_discriminators);
        let rng = ChaCha8Rng::seed_from_u64(t.seed);
        Ok(Self { config, device, generator, critic, emotion_disc, extractor, opt_g, opt_c, opt_e, rng, iteration: 0 })
    }

    /// Starts the GAN stage from an init-stage checkpoint: generator weights
    /// are taken over, discriminators and optimizers start fresh.
    pub fn from_init_checkpoint(config: Config, path: &Path, device: Device) -> Result<Self> {
        if config.train.stage != Stage::Gan {
            return Err(Error::Config("starting from an init checkpoint requires stage = gan".into()));
        }
        let ck = read_checkpoint(path)?;
        if ck.meta.kind != CheckpointKind::Gan || ck.meta.stage != Stage::Init {
            return Err(Error::Config(format!("{} is not an init-stage checkpoint", path.display())));
        }
        check_topology(&ck.meta.config.model, &config.model)?;
        let mut trainer = Self::new(config, device)?;
        load_variables(&mut trainer.generator.vs, &ck.tensors, "generator")?;
        Ok(trainer)
    }

    /// Restores a checkpoint of the same stage, continuing its iteration
    /// counter and RNG stream.
    pub fn resume(config: Config, path: &Path, device: Device) -> Result<Self> {
        let ck = read_checkpoint(path)?;
        if ck.meta.kind != CheckpointKind::Gan {
            return Err(Error::Config(format!("{} is not a training checkpoint", path.display())));
        }
        check_topology(&ck.meta.config.model, &config.model)?;
        if ck.meta.stage != config.train.stage {
            return Err(Error::Config(format!(
                "checkpoint is from stage {} but the config asks for stage {}",
                ck.meta.stage, config.train.stage
            )));
        }
        let mut trainer = Self::new(config, device)?;
        trainer.load_state(&ck)?;
        Ok(trainer)
    }

    fn load_state(&mut self, ck: &Checkpoint) -> Result<()> {
        load_variables(&mut self.generator.vs, &ck.tensors, "generator")?;
        load_variables(&mut self.critic.vs, &ck.tensors, "critic")?;
        load_variables(&mut self.emotion_disc.vs, &ck.tensors, "emotion_disc")?;
        self.opt_g.load_state(&ck.tensors, "opt.generator")?;
        self.opt_c.load_state(&ck.tensors, "opt.critic")?;
        self.opt_e.load_state(&ck.tensors, "opt.emotion_disc")?;
        self.iteration = ck.meta.iteration;
        self.rng = ck.meta.rng.restore()?;
        Ok(())
    }

    pub fn stage(&self) -> Stage {
        self.config.train.stage
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            format_version: FORMAT_VERSION,
            kind: CheckpointKind::Gan,
            config: self.config.clone(),
            stage: self.stage(),
            iteration: self.iteration,
            rng: RngState::capture(&self.rng),
        };
        let mut tensors = named_variables(&self.generator.vs, "generator");
        tensors.extend(named_variables(&self.critic.vs, "critic"));
        tensors.extend(named_variables(&self.emotion_disc.vs, "emotion_disc"));
        tensors.extend(self.opt_g.named_state("opt.generator"));
        tensors.extend(self.opt_c.named_state("opt.critic"));
        tensors.extend(self.opt_e.named_state("opt.emotion_disc"));
        save_checkpoint(path, &meta, &tensors)
    }

    pub fn batch_spec(&self) -> BatchSpec<'_> {
        spec_for(&self.config, self.device)
    }

    /// Draws the next training batch from the trainer's RNG stream.
    pub fn next_batch(&mut self, store: &ClipStore) -> Result<Batch> {
        let spec = spec_for(&self.config, self.device);
        sample_batch(store, &spec, &mut self.rng)
    }

    fn perceptual(&self, fake: &Tensor, real: &Tensor) -> Result<Tensor> {
        match &self.extractor {
            Some(e) => perceptual_loss(e, fake, real),
            None => Ok(Tensor::zeros([], (fake.kind(), fake.device()))),
        }
    }

    /// One iteration of the current stage on `batch`.
    pub fn step_on(&mut self, batch: &Batch) -> Result<StepRecord> {
        match self.stage() {
            Stage::Init => self.init_step(batch),
            Stage::Gan => self.gan_step(batch),
        }
    }

    /// Draws a batch and runs one iteration.
    pub fn step(&mut self, store: &ClipStore) -> Result<StepRecord> {
        let batch = self.next_batch(store)?;
        self.step_on(&batch)
    }

    fn record(&self, l1: f64, perceptual: f64, total: f64, grad_norm_g: f64) -> StepRecord {
        StepRecord {
            iteration: self.iteration,
            stage: self.stage().to_string(),
            l1_mrm: l1,
            perceptual,
            total,
            lr_g: self.opt_g.lr,
            lr_d: self.opt_c.lr,
            grad_norm_g,
            ..Default::default()
        }
    }

    fn init_step(&mut self, b: &Batch) -> Result<StepRecord> {
        let it = self.iteration + 1;
        let w = self.config.train.weights;
        let fake = self.generator.forward(&b.audio, &b.condition, &b.onehot, &b.noise)?;
        let l1 = mrm_l1(&fake, &b.frames, &b.mrm)?;
        let perc = self.perceptual(&fake, &b.frames)?;
        let terms = ObjectiveTerms {
            l1: finite("l1_mrm", &l1, it)?,
            perceptual: finite("perceptual", &perc, it)?,
            j_fd: 0.0,
            j_ed: 0.0,
        };
        // Adversarial terms do not exist in this stage.
        let zero = Tensor::zeros([], (fake.kind(), fake.device()));
        let init_weights = LossWeights { gamma: 0.0, delta: 0.0, ..w };
        let total = generator_objective_tensor(&l1, &perc, &zero, &zero, &init_weights);
        let total_v = finite("total", &total, it)?;
        let info = self.opt_g.step(&total)?;
        self.iteration = it;
        Ok(self.record(terms.l1, terms.perceptual, total_v, info.grad_norm))
    }

    fn gan_step(&mut self, b: &Batch) -> Result<StepRecord> {
        let it = self.iteration + 1;
        let w = self.config.train.weights;
        let fake = self.generator.forward(&b.audio, &b.condition, &b.onehot, &b.noise)?;
        let fake_d = fake.detach();

        // Critic.
        let real_s = self.critic.forward(&b.frames, &b.condition)?;
        let fake_s = self.critic.forward(&fake_d, &b.condition)?;
        let critic = &self.critic;
        let gp = gradient_penalty(|x| critic.forward(x, &b.condition), &b.frames, &fake_d, &mut self.rng)?;
        let c_loss = wgan_critic_step_loss(&real_s, &fake_s, &gp, w.gp_lambda);
        let gp_v = finite("gp", &gp, it)?;
        let critic_v = finite("critic", &c_loss, it)?;
        self.opt_c.step(&c_loss)?;

        // Emotion discriminator.
        let logits_real = self.emotion_disc.logits(&b.frames)?;
        let logits_fake = self.emotion_disc.logits(&fake_d)?;
        let e = emotion_gan_losses_logits(&logits_real, &logits_fake, &b.labels, &b.labels)?;
        let emotion_d = finite("emotion_d", &e.d_loss, it)?;
        let emotion_acc = {
            let _guard = tch::no_grad_guard();
            let mut targets = b.labels.clone();
            targets.extend(std::iter::repeat_n(FAKE_CLASS, b.labels.len()));
            let targets = Tensor::from_slice(&targets).to_device(self.device);
            let pred = Tensor::cat(&[&logits_real, &logits_fake], 0).argmax(-1, false);
            pred.eq_tensor(&targets).to_kind(Kind::Double).mean(Kind::Double).double_value(&[])
        };
        self.opt_e.step(&e.d_loss)?;

        // Generator, against the updated discriminators.
        let l1 = mrm_l1(&fake, &b.frames, &b.mrm)?;
        let perc = self.perceptual(&fake, &b.frames)?;
        let j_fd = wgan_generator_loss(&self.critic.forward(&fake, &b.condition)?);
        let j_ed = cross_entropy_logits(&self.emotion_disc.logits(&fake)?, &b.labels);
        let terms = ObjectiveTerms {
            l1: finite("l1_mrm", &l1, it)?,
            perceptual: finite("perceptual", &perc, it)?,
            j_fd: finite("j_fd", &j_fd, it)?,
            j_ed: finite("j_ed", &j_ed, it)?,
        };
        let total = generator_objective_tensor(&l1, &perc, &j_fd, &j_ed, &w);
        let total_v = finite("total", &total, it)?;
        let info = self.opt_g.step(&total)?;
        self.iteration = it;
        Ok(StepRecord {
            j_fd: Some(terms.j_fd),
            j_ed: Some(terms.j_ed),
            critic: Some(critic_v),
            gp: Some(gp_v),
            emotion_d: Some(emotion_d),
            emotion_acc: Some(emotion_acc),
            ..self.record(terms.l1, terms.perceptual, total_v, info.grad_norm)
        })
    }

    /// Reconstruction losses on a fixed batch, plus emotion-discriminator
    /// accuracy on the real frames in the GAN stage.
    pub fn validate(&self, batch: &Batch) -> Result<ValidationRecord> {
        let _guard = tch::no_grad_guard();
        let fake = self.generator.forward(&batch.audio, &batch.condition, &batch.onehot, &batch.noise)?;
        let l1 = mrm_l1(&fake, &batch.frames, &batch.mrm)?.double_value(&[]);
        let perceptual = self.perceptual(&fake, &batch.frames)?.double_value(&[]);
        let emotion_acc = match self.stage() {
            Stage::Init => None,
            Stage::Gan => {
                let pred = self.emotion_disc.logits(&batch.frames)?.argmax(-1, false);
                let labels = Tensor::from_slice(&batch.labels).to_device(self.device);
                Some(pred.eq_tensor(&labels).to_kind(Kind::Double).mean(Kind::Double).double_value(&[]))
            }
        };
        Ok(ValidationRecord { iteration: self.iteration, l1_mrm: l1, perceptual, emotion_acc, best: false })
    }

    fn validation_score(&self, v: &ValidationRecord) -> f64 {
        let w = &self.config.train.weights;
        w.alpha * v.l1_mrm + w.beta * v.perceptual
    }

    /// Trains until the stage's iteration budget is reached, or for at most
    /// `max_steps` more steps. Writes logs, sample grids and checkpoints
    /// under `out`.
    pub fn run(
        &mut self,
        train: &ClipStore,
        val: Option<&ClipStore>,
        out: &Path,
        max_steps: Option<u64>,
    ) -> Result<RunSummary> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let config_path = out.join("config.toml");
        std::fs::write(&config_path, self.config.to_toml_string()).map_err(|e| Error::io(&config_path, e))?;
        let t = self.config.train.clone();
        let target = match max_steps {
            Some(n) => t.iterations().min(self.iteration + n),
            None => t.iterations(),
        };
        let mut log = CsvLog::open(&out.join(LOG_FILE))?;
        let val_log_path = out.join(VAL_LOG_FILE);
        let val_batch = match val {
            Some(store) => validation_batch(store, t.validation_windows, &self.batch_spec())?,
            None => None,
        };
        let mut best = if val_log_path.exists() {
            let rows: Vec<ValidationRecord> = read_log(&val_log_path)?;
            rows.iter().map(|r| self.validation_score(r)).fold(f64::INFINITY, f64::min)
        } else {
            f64::INFINITY
        };
        let mut val_log = CsvLog::open(&val_log_path)?;
        let last = out.join(LAST_CHECKPOINT);
        let best_path = out.join(BEST_CHECKPOINT);
        let started = Instant::now();
        let mut records = Vec::new();
        let mut validations = Vec::new();

        while self.iteration < target {
            let batch = self.next_batch(train)?;
            let mut rec = match self.step_on(&batch) {
                Ok(r) => r,
                Err(e @ Error::NonFiniteLoss { .. }) => {
                    if last.exists() {
                        log::error!("{e}; last good checkpoint is {}", last.display());
                    } else {
                        log::error!("{e}; no checkpoint was written before the failure");
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            rec.wall_s = started.elapsed().as_secs_f64();
            let it = self.iteration;
            if it % t.log_every.max(1) == 0 || it == target {
                log.write(&rec)?;
                log::info!(
                    "{} {it}: l1_mrm {:.5} perceptual {:.5} total {:.5}",
                    rec.stage,
                    rec.l1_mrm,
                    rec.perceptual,
                    rec.total
                );
            }
            records.push(rec);
            if t.sample_every > 0 && it % t.sample_every == 0 {
                let _guard = tch::no_grad_guard();
                let fake = self.generator.forward(&batch.audio, &batch.condition, &batch.onehot, &batch.noise)?;
                let path = out.join("samples").join(format!("{}_{it:08}.png", self.stage()));
                write_sample_grid(&path, &batch.frames.get(0), &fake.get(0))?;
            }
            if let Some(vb) = &val_batch {
                if t.validate_every > 0 && it % t.validate_every == 0 {
                    let mut v = self.validate(vb)?;
                    let score = self.validation_score(&v);
                    if score < best {
                        best = score;
                        v.best = true;
                        self.save(&best_path)?;
                    }
                    val_log.write(&v)?;
                    validations.push(v);
                }
            }
            if t.checkpoint_every > 0 && it % t.checkpoint_every == 0 {
                self.save(&last)?;
            }
        }
        self.save(&last)?;
        Ok(RunSummary {
            iteration: self.iteration,
            records,
            validations,
            last_checkpoint: last,
            best_checkpoint: best_path.exists().then_some(best_path),
        })
    }
}
