//! Mismatched audio/visual emotion stimuli: for every pair in the 6×6 grid,
//! videos driven by a clip of the audio emotion but conditioned on the visual
//! emotion.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::clip::load_clip;
use crate::dataset::manifest::{Manifest, Split};
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::inference::{synthesize, write_outputs};
use crate::media::Audio;
use crate::video::SAMPLES_PER_FRAME;

pub const STIMULI_FILE: &str = "stimuli.csv";

/// One row of the stimuli manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub file: String,
    pub audio_emotion: Emotion,
    pub visual_emotion: Emotion,
    pub source_clip: String,
}

impl Stimulus {
    pub fn is_mismatched(&self) -> bool {
        self.audio_emotion != self.visual_emotion
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedStimulus {
    pub stimulus: Stimulus,
    /// Noise seed for the generator.
    pub seed: u64,
}

/// Plans `per_pair` videos for each of the 36 (audio, visual) pairs from clips
/// of `split`. Within a pair the source clips are distinct; every emotion
/// needs at least `per_pair` clips.
pub fn plan_stimuli(manifest: &Manifest, split: Split, per_pair: usize, seed: u64) -> Result<Vec<PlannedStimulus>> {
    if per_pair == 0 {
        return Err(Error::Config("per_pair must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = Vec::with_capacity(36 * per_pair);
    for audio in Emotion::ALL {
        let mut pool: Vec<&str> =
            manifest.split(split).filter(|e| e.emotion == audio).map(|e| e.clip_path.as_str()).collect();
        if pool.len() < per_pair {
            return Err(Error::InvalidInput(format!(
                "{split} split has {} {} clips, need {per_pair}",
                pool.len(),
                audio.name()
            )));
        }
        pool.sort_unstable();
        pool.shuffle(&mut rng);
        for (vi, visual) in Emotion::ALL.into_iter().enumerate() {
            for k in 0..per_pair {
                let source = pool[(vi * per_pair + k) % pool.len()];
                let n = plan.len() as u64;
                plan.push(PlannedStimulus {
                    stimulus: Stimulus {
                        file: format!("{}_{}_{k}.y4m", audio.name(), visual.name()),
                        audio_emotion: audio,
                        visual_emotion: visual,
                        source_clip: source.to_string(),
                    },
                    seed: seed.wrapping_add(n),
                });
            }
        }
    }
    Ok(plan)
}

pub fn write_stimuli_manifest(path: &Path, stimuli: &[Stimulus]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in stimuli {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_stimuli_manifest(path: &Path) -> Result<Vec<Stimulus>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(Error::from)
}

/// Generates every planned video into `out` from clips below `root`, and
/// writes `{out}/stimuli.csv`. `max_frames` truncates the driving audio.
pub fn render_stimuli(
    generator: &Generator,
    plan: &[PlannedStimulus],
    root: &Path,
    out: &Path,
    max_frames: Option<usize>,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for p in plan {
        let s = &p.stimulus;
        let clip = load_clip(&root.join(&s.source_clip))?;
        let mut audio: Audio = clip.audio.clone();
        if let Some(n) = max_frames {
            audio.samples.truncate(n * SAMPLES_PER_FRAME);
        }
        let video = synthesize(generator, &audio, &clip.video, s.visual_emotion, p.seed)?;
        let stem = s.file.trim_end_matches(".y4m");
        write_outputs(out, stem, &video, &audio, false)?;
        log::info!("{} <- {} as {}", s.file, s.source_clip, s.visual_emotion.name());
    }
    let path = out.join(STIMULI_FILE);
    let rows: Vec<Stimulus> = plan.iter().map(|p| p.stimulus.clone()).collect();
    write_stimuli_manifest(&path, &rows)?;
    Ok(path)
}
