//! Clip access and mini-batch assembly for training.

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use tch::{Device, Tensor};

use crate::config::AugmentConfig;
use crate::dataset::align::AlignedClip;
use crate::dataset::augment::augment;
use crate::dataset::clip::load_clip;
use crate::dataset::manifest::{Manifest, Split};
use crate::dataset::mrm::MrmOptions;
use crate::dataset::window::{sample_window, window_at, TrainingWindow};
use crate::error::{Error, Result};
use crate::generator::{emotion_onehot, noise_tensor};

/// Aligned clips, either held in memory or loaded from disk on first use.
#[derive(Debug)]
pub enum ClipStore {
    Memory(Vec<Rc<AlignedClip>>),
    Disk { paths: Vec<PathBuf>, cache: RefCell<HashMap<usize, Rc<AlignedClip>>>, capacity: usize },
}

impl ClipStore {
    pub fn memory(clips: Vec<AlignedClip>) -> Self {
        ClipStore::Memory(clips.into_iter().map(Rc::new).collect())
    }

    /// Clips of `split` in `manifest`, resolved against `root`. Up to
    /// `capacity` decoded clips stay cached.
    pub fn from_manifest(root: &Path, manifest: &Manifest, split: Split, capacity: usize) -> Self {
        let paths = manifest.split(split).map(|e| manifest.resolve(root, e)).collect();
        ClipStore::Disk { paths, cache: RefCell::new(HashMap::new()), capacity }
    }

    pub fn len(&self) -> usize {
        match self {
            ClipStore::Memory(c) => c.len(),
            ClipStore::Disk { paths, .. } => paths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Result<Rc<AlignedClip>> {
        match self {
            ClipStore::Memory(c) => c.get(i).cloned().ok_or_else(|| Error::InvalidInput(format!("clip {i}"))),
            ClipStore::Disk { paths, cache, capacity } => {
                if let Some(c) = cache.borrow().get(&i) {
                    return Ok(c.clone());
                }
                let path = paths.get(i).ok_or_else(|| Error::InvalidInput(format!("clip {i}")))?;
                let clip = Rc::new(load_clip(path)?);
                let mut cache = cache.borrow_mut();
                if cache.len() < *capacity {
                    cache.insert(i, clip.clone());
                }
                Ok(clip)
            }
        }
    }
}

/// One mini-batch as tensors on the training device.
#[derive(Debug)]
pub struct Batch {
    /// `[B, T, 3, H, W]` in `[-1, 1]`.
    pub frames: Tensor,
    /// `[B, T * 320]`.
    pub audio: Tensor,
    /// `[B, 3, H, W]`.
    pub condition: Tensor,
    pub labels: Vec<i64>,
    /// `[B, 6]`.
    pub onehot: Tensor,
    /// MRM loss weights `[B, 1, 1, H, W]`.
    pub mrm: Tensor,
    /// `[B, T, Z]`.
    pub noise: Tensor,
}

impl Batch {
    pub fn size(&self) -> i64 {
        self.frames.size()[0]
    }
}

/// Stacks windows into a batch. The condition image goes through the same
/// photometric transform as its window so identity and target stay consistent.
pub fn collate(
    windows: &[TrainingWindow],
    augment_seeds: Option<(&AugmentConfig, &[u64])>,
    noise_dim: usize,
    noise_seed: u64,
    device: Device,
) -> Result<Batch> {
    let first = windows.first().ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
    let t = first.frames.frames;
    let mut frames = Vec::with_capacity(windows.len());
    let mut conds = Vec::with_capacity(windows.len());
    for (i, w) in windows.iter().enumerate() {
        if w.frames.frames != t {
            return Err(Error::Shape("windows in a batch must have equal length".into()));
        }
        let both = Tensor::cat(&[w.condition.to_tensor(Device::Cpu), w.frames.to_tensor(Device::Cpu)], 0);
        let both = match augment_seeds {
            Some((cfg, seeds)) => augment(&both, cfg, seeds[i]),
            None => both,
        };
        conds.push(both.get(0));
        frames.push(both.narrow(0, 1, t as i64));
    }
    let audio: Vec<Tensor> = windows.iter().map(|w| Tensor::from_slice(&w.audio)).collect();
    let mrm: Vec<Tensor> = windows.iter().map(|w| w.mrm.to_tensor(Device::Cpu)).collect();
    let labels: Vec<i64> = windows.iter().map(|w| w.emotion.index() as i64).collect();
    let emotions: Vec<_> = windows.iter().map(|w| w.emotion).collect();
    Ok(Batch {
        frames: Tensor::stack(&frames, 0).to_device(device),
        audio: Tensor::stack(&audio, 0).to_device(device),
        condition: Tensor::stack(&conds, 0).to_device(device),
        onehot: emotion_onehot(&emotions, device),
        labels,
        mrm: Tensor::stack(&mrm, 0).to_device(device),
        noise: noise_tensor(windows.len(), t, noise_dim, noise_seed, device),
    })
}

/// Everything needed to draw batches.
#[derive(Debug, Clone)]
pub struct BatchSpec<'a> {
    pub batch_size: usize,
    pub window: usize,
    pub noise_dim: usize,
    pub mrm: MrmOptions,
    pub augment: Option<&'a AugmentConfig>,
    pub device: Device,
}

/// Draws clip indices, window starts, augmentation seeds and the noise seed
/// from `rng`, in that order, so the batch sequence is a pure function of the
/// RNG state.
pub fn sample_batch(store: &ClipStore, spec: &BatchSpec, rng: &mut ChaCha8Rng) -> Result<Batch> {
    if store.is_empty() {
        return Err(Error::InvalidInput("no training clips".into()));
    }
    let mut windows = Vec::with_capacity(spec.batch_size);
    for _ in 0..spec.batch_size {
        let clip = store.get(rng.random_range(0..store.len()))?;
        windows.push(sample_window(&clip, spec.window, rng, spec.mrm)?);
    }
    let seeds: Vec<u64> = (0..spec.batch_size).map(|_| rng.next_u64()).collect();
    let noise_seed = rng.next_u64();
    collate(&windows, spec.augment.map(|a| (a, seeds.as_slice())), spec.noise_dim, noise_seed, spec.device)
}

/// Fixed validation batch: the first `window` frames of up to `count` clips,
/// without augmentation and with a fixed noise seed.
pub fn validation_batch(store: &ClipStore, count: usize, spec: &BatchSpec) -> Result<Option<Batch>> {
    let mut windows = Vec::new();
    for i in 0..store.len().min(count) {
        let clip = store.get(i)?;
        if clip.frames() >= spec.window {
            windows.push(window_at(&clip, 0, spec.window, spec.mrm)?);
        }
    }
    if windows.is_empty() {
        return Ok(None);
    }
    collate(&windows, None, spec.noise_dim, 0, spec.device).map(Some)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::dataset::window::testutil::counting_clip;

    fn spec(augment: Option<&AugmentConfig>) -> BatchSpec<'_> {
        BatchSpec { batch_size: 3, window: 8, noise_dim: 4, mrm: MrmOptions::default(), augment, device: Device::Cpu }
    }

    #[test]
    fn batch_shapes() {
        let store = ClipStore::memory(vec![counting_clip(40), counting_clip(50)]);
        let b = sample_batch(&store, &spec(None), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(b.frames.size(), vec![3, 8, 3, 128, 128]);
        assert_eq!(b.audio.size(), vec![3, 8 * 320]);
        assert_eq!(b.condition.size(), vec![3, 3, 128, 128]);
        assert_eq!(b.mrm.size(), vec![3, 1, 1, 128, 128]);
        assert_eq!(b.noise.size(), vec![3, 8, 4]);
        assert_eq!(b.onehot.size(), vec![3, 6]);
        // Condition is clip frame 0, which the counting clip fills with zeros.
        assert!((b.condition.max().double_value(&[]) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn same_rng_state_same_batch() {
        let store = ClipStore::memory(vec![counting_clip(40), counting_clip(50)]);
        let aug = AugmentConfig::default();
        let a = sample_batch(&store, &spec(Some(&aug)), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_batch(&store, &spec(Some(&aug)), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(a.frames.equal(&b.frames) && a.audio.equal(&b.audio) && a.noise.equal(&b.noise));
    }

    #[test]
    fn validation_batch_is_fixed() {
        let store = ClipStore::memory(vec![counting_clip(40), counting_clip(5)]);
        let v = validation_batch(&store, 8, &spec(None)).unwrap().unwrap();
        assert_eq!(v.size(), 1);
    }
}
