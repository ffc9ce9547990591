//! Registration of raw clips onto a per-actor template and resampling to the
//! training rates (25 FPS video, 8 kHz audio, 128×128 frames).

use serde::{Deserialize, Serialize};

use super::landmarks::{LandmarkDetector, LandmarkTrack, Landmarks};
use super::similarity::{estimate_similarity, SimilarityTransform};
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::media::Audio;
use crate::video::{Video8, AUDIO_RATE, FRAME_SIZE, SAMPLES_PER_FRAME, VIDEO_FPS};

/// A clip as recorded, before alignment.
#[derive(Debug, Clone)]
pub struct RawClip {
    pub video: Video8,
    pub fps: f64,
    pub audio: Audio,
    pub actor_id: String,
    pub sentence_id: String,
    pub emotion: Emotion,
}

impl RawClip {
    pub fn validate(&self) -> Result<()> {
        if self.video.frames == 0 {
            return Err(Error::ClipRejected("no video frames".into()));
        }
        if !(self.fps > 0.0) || self.audio.sample_rate == 0 {
            return Err(Error::ClipRejected("non-positive frame or sample rate".into()));
        }
        let video_secs = self.video.frames as f64 / self.fps;
        let gap = (self.audio.duration() - video_secs).abs();
        if gap > 1.0 / self.fps + 1e-9 {
            return Err(Error::ClipRejected(format!(
                "audio ({:.3}s) and video ({video_secs:.3}s) durations differ by more than one frame",
                self.audio.duration()
            )));
        }
        Ok(())
    }
}

/// Where an aligned clip came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub fps: f64,
    pub sample_rate: u32,
    pub transform: SimilarityTransform,
}

/// A registered clip at 25 FPS / 8 kHz with `audio.len() == 320 * frames`.
#[derive(Debug, Clone)]
pub struct AlignedClip {
    pub video: Video8,
    pub audio: Audio,
    /// Landmarks in aligned-frame coordinates, one entry per output frame.
    pub landmarks: LandmarkTrack,
    pub emotion: Emotion,
    pub actor_id: String,
    pub sentence_id: String,
    pub source: SourceInfo,
}

impl AlignedClip {
    pub fn frames(&self) -> usize {
        self.video.frames
    }

    pub fn name(&self) -> String {
        format!("{}_{}_{}", self.actor_id, self.sentence_id, self.emotion.crema_code())
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.video.height != FRAME_SIZE || self.video.width != FRAME_SIZE {
            return Err(Error::Shape(format!(
                "aligned frames are {}x{}, expected {FRAME_SIZE}x{FRAME_SIZE}",
                self.video.height, self.video.width
            )));
        }
        if self.audio.sample_rate != AUDIO_RATE {
            return Err(Error::InvalidInput(format!("audio rate {}", self.audio.sample_rate)));
        }
        let expected = self.video.frames * SAMPLES_PER_FRAME;
        if self.audio.samples.len().abs_diff(expected) > SAMPLES_PER_FRAME {
            return Err(Error::InvalidInput(format!(
                "{} audio samples for {} frames",
                self.audio.samples.len(),
                self.video.frames
            )));
        }
        if self.landmarks.len() != self.video.frames {
            return Err(Error::InvalidInput("landmark track length differs from frame count".into()));
        }
        Ok(())
    }
}

/// Number of frames after converting `frames` at `fps` to 25 FPS.
pub fn resampled_frame_count(frames: usize, fps: f64) -> usize {
    ((frames as f64 * VIDEO_FPS as f64 / fps).round() as usize).max(1)
}

/// Source frame shown at output frame `k` (nearest-in-time selection).
pub fn source_frame_index(k: usize, fps: f64, source_frames: usize) -> usize {
    let t = (k as f64 * fps / VIDEO_FPS as f64 + 1e-9).round() as usize;
    t.min(source_frames - 1)
}

/// Estimates the similarity from `landmarks`' eye/nose centers to the template's.
pub fn anchor_transform(landmarks: &Landmarks, template: &Landmarks) -> Result<SimilarityTransform> {
    estimate_similarity(&landmarks.anchors(), &template.anchors())
}

/// Registers `raw` onto `template` using a single transform estimated on the
/// first frame, then converts to 25 FPS / 8 kHz / 128×128.
///
/// Later frames reuse the first frame's transform, so head motion relative to
/// the first frame is preserved.
pub fn align_clip(raw: &RawClip, template: &Landmarks, detector: &dyn LandmarkDetector) -> Result<AlignedClip> {
    raw.validate()?;
    let first = detector
        .detect(&raw.video, 0)
        .ok_or_else(|| Error::ClipRejected("landmark detection failed on the first frame".into()))?;
    let transform = anchor_transform(&first, template)
        .map_err(|e| Error::ClipRejected(format!("first-frame landmarks unusable: {e}")))?;

    let out_frames = resampled_frame_count(raw.video.frames, raw.fps);
    let mut video = Video8::filled(out_frames, FRAME_SIZE, FRAME_SIZE, 0);
    let mut track = Vec::with_capacity(out_frames);
    for k in 0..out_frames {
        let src = source_frame_index(k, raw.fps, raw.video.frames);
        warp_frame(&raw.video, src, &transform, video.frame_mut(k), FRAME_SIZE, FRAME_SIZE);
        let lm = if src == 0 { Some(first.clone()) } else { detector.detect(&raw.video, src) };
        track.push(lm.map(|l| l.map(|p| transform.apply(p))));
    }

    let mut audio = raw.audio.resample(AUDIO_RATE)?;
    audio.fit_to(out_frames * SAMPLES_PER_FRAME);

    let clip = AlignedClip {
        video,
        audio,
        landmarks: LandmarkTrack(track),
        emotion: raw.emotion,
        actor_id: raw.actor_id.clone(),
        sentence_id: raw.sentence_id.clone(),
        source: SourceInfo { fps: raw.fps, sample_rate: raw.audio.sample_rate, transform },
    };
    clip.check_invariants()?;
    Ok(clip)
}

/// Renders frame `t` of `src` through `transform` (source -> output pixel
/// coordinates) into `out`, sampling bilinearly; uncovered pixels are black.
pub fn warp_frame(src: &Video8, t: usize, transform: &SimilarityTransform, out: &mut [u8], out_h: usize, out_w: usize) {
    let inv = transform.inverse();
    let frame = src.frame(t);
    let (w, h) = (src.width as isize, src.height as isize);
    let m = inv.matrix();
    for oy in 0..out_h {
        for ox in 0..out_w {
            let (x, y) = (ox as f64, oy as f64);
            let sx = m[0][0] * x + m[0][1] * y + m[0][2];
            let sy = m[1][0] * x + m[1][1] * y + m[1][2];
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let mut acc = [0.0f64; 3];
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let weight = wx * wy;
                    if weight == 0.0 {
                        continue;
                    }
                    let (px, py) = (x0 + dx, y0 + dy);
                    if px < 0 || py < 0 || px >= w || py >= h {
                        continue;
                    }
                    let i = ((py * w + px) * 3) as usize;
                    for c in 0..3 {
                        acc[c] += weight * frame[i + c] as f64;
                    }
                }
            }
            let o = (oy * out_w + ox) * 3;
            for c in 0..3 {
                out[o + c] = acc[c].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
}

/// Warps every frame of `video` with one transform.
pub fn warp_video(video: &Video8, transform: &SimilarityTransform, out_h: usize, out_w: usize) -> Video8 {
    let mut out = Video8::filled(video.frames, out_h, out_w, 0);
    for t in 0..video.frames {
        warp_frame(video, t, transform, out.frame_mut(t), out_h, out_w);
    }
    out
}
