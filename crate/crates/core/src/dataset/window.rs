//! Fixed-length training windows cut from aligned clips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::align::AlignedClip;
use super::mrm::{compute_mrm, MouthRegionMask, MrmOptions};
use super::similarity::Point;
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::video::{Video8, SAMPLES_PER_FRAME};

/// Frames per training window.
pub const WINDOW_FRAMES: usize = 32;

#[derive(Debug, Clone)]
pub struct TrainingWindow {
    pub frames: Video8,
    /// `frames.frames * 320` samples at 8 kHz.
    pub audio: Vec<f32>,
    /// Frame 0 of the whole clip, not of the window.
    pub condition: Video8,
    pub emotion: Emotion,
    pub mrm: MouthRegionMask,
    pub start: usize,
}

/// Cuts `len` frames starting at `start` together with the matching audio.
pub fn window_at(clip: &AlignedClip, start: usize, len: usize, mrm: MrmOptions) -> Result<TrainingWindow> {
    if clip.frames() < start + len || len == 0 {
        return Err(Error::ClipRejected(format!(
            "{}: window [{start}, {}) exceeds {} frames",
            clip.name(),
            start + len,
            clip.frames()
        )));
    }
    let (a0, a1) = (start * SAMPLES_PER_FRAME, (start + len) * SAMPLES_PER_FRAME);
    let mut audio = clip.audio.samples.get(a0..a1.min(clip.audio.samples.len())).unwrap_or(&[]).to_vec();
    // Aligned clips may be up to one frame short on audio; pad that slack with silence.
    audio.resize(a1 - a0, 0.0);

    let mouths: Vec<Vec<Point>> =
        (start..start + len).filter_map(|t| clip.landmarks.get(t)).map(|l| l.mouth().to_vec()).collect();
    let size = clip.video.height;
    let mrm = if mouths.is_empty() {
        log::debug!("{}: no landmarks in window at {start}, using a uniform mask", clip.name());
        MouthRegionMask::uniform(size)
    } else {
        compute_mrm(&mouths, size, mrm)?
    };

    Ok(TrainingWindow {
        frames: clip.video.slice(start, len)?,
        audio,
        condition: clip.video.first_frame(),
        emotion: clip.emotion,
        mrm,
        start,
    })
}

/// Picks a uniformly random start in `[0, T - len]` and cuts the window.
pub fn sample_window(clip: &AlignedClip, len: usize, rng: &mut impl Rng, mrm: MrmOptions) -> Result<TrainingWindow> {
    if clip.frames() < len {
        return Err(Error::ClipRejected(format!("{} has {} frames, a window needs {len}", clip.name(), clip.frames())));
    }
    let start = rng.random_range(0..=clip.frames() - len);
    window_at(clip, start, len, mrm)
}

/// [`sample_window`] with a fresh generator seeded from `seed`.
pub fn sample_window_seeded(clip: &AlignedClip, len: usize, seed: u64, mrm: MrmOptions) -> Result<TrainingWindow> {
    sample_window(clip, len, &mut ChaCha8Rng::seed_from_u64(seed), mrm)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::dataset::align::SourceInfo;
    use crate::dataset::landmarks::testutil::canonical_face;
    use crate::dataset::landmarks::LandmarkTrack;
    use crate::dataset::similarity::SimilarityTransform;
    use crate::media::Audio;
    use crate::video::{AUDIO_RATE, FRAME_SIZE};

    /// Aligned clip whose frame `t` is filled with value `t` and whose audio
    /// sample `i` equals `i`.
    pub fn counting_clip(frames: usize) -> AlignedClip {
        let mut video = Video8::filled(frames, FRAME_SIZE, FRAME_SIZE, 0);
        for t in 0..frames {
            video.frame_mut(t).fill(t as u8);
        }
        let samples = (0..frames * SAMPLES_PER_FRAME).map(|i| i as f32).collect();
        AlignedClip {
            video,
            audio: Audio::new(samples, AUDIO_RATE),
            landmarks: LandmarkTrack(vec![Some(canonical_face()); frames]),
            emotion: Emotion::Happiness,
            actor_id: "1001".into(),
            sentence_id: "DFA".into(),
            source: SourceInfo { fps: 25.0, sample_rate: AUDIO_RATE, transform: SimilarityTransform::IDENTITY },
        }
    }
}
