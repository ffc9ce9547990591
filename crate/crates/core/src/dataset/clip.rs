//! On-disk container for aligned clips.
//!
//! One directory per clip:
//!
//! ```text
//! <clip>/frames.safetensors   u8 tensor "frames" [T, 128, 128, 3]
//! <clip>/audio.wav            16-bit PCM mono, 8 kHz
//! <clip>/landmarks.json       T entries of 68 [x, y] points (or null)
//! <clip>/meta.json            actor, sentence, emotion, source rates, transform
//! ```

use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::align::{AlignedClip, SourceInfo};
use super::landmarks::LandmarkTrack;
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::media::{read_wav, write_wav};
use crate::video::{Video8, AUDIO_RATE, VIDEO_FPS};

pub const FRAMES_FILE: &str = "frames.safetensors";
pub const AUDIO_FILE: &str = "audio.wav";
pub const LANDMARKS_FILE: &str = "landmarks.json";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub actor_id: String,
    pub sentence_id: String,
    pub emotion: Emotion,
    pub frames: usize,
    pub fps: u32,
    pub sample_rate: u32,
    pub source: SourceInfo,
}

pub fn is_clip_dir(dir: &Path) -> bool {
    dir.join(META_FILE).is_file() && dir.join(FRAMES_FILE).is_file()
}

pub fn save_clip(dir: &Path, clip: &AlignedClip) -> Result<()> {
    clip.check_invariants()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_frames(&dir.join(FRAMES_FILE), &clip.video)?;
    write_wav(&dir.join(AUDIO_FILE), &clip.audio)?;
    clip.landmarks.save(&dir.join(LANDMARKS_FILE))?;
    let meta = ClipMeta {
        actor_id: clip.actor_id.clone(),
        sentence_id: clip.sentence_id.clone(),
        emotion: clip.emotion,
        frames: clip.video.frames,
        fps: VIDEO_FPS,
        sample_rate: AUDIO_RATE,
        source: clip.source.clone(),
    };
    let path = dir.join(META_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
}

pub fn load_meta(dir: &Path) -> Result<ClipMeta> {
    let path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn load_clip(dir: &Path) -> Result<AlignedClip> {
    let meta = load_meta(dir)?;
    let video = load_frames(&dir.join(FRAMES_FILE))?;
    let audio = read_wav(&dir.join(AUDIO_FILE))?;
    let lm_path = dir.join(LANDMARKS_FILE);
    let landmarks =
        if lm_path.is_file() { LandmarkTrack::load(&lm_path)? } else { LandmarkTrack(vec![None; video.frames]) };
    if meta.frames != video.frames {
        return Err(Error::format(dir, "meta.json frame count disagrees with frames"));
    }
    let clip = AlignedClip {
        video,
        audio,
        landmarks,
        emotion: meta.emotion,
        actor_id: meta.actor_id,
        sentence_id: meta.sentence_id,
        source: meta.source,
    };
    clip.check_invariants().map_err(|e| Error::format(dir, e.to_string()))?;
    Ok(clip)
}

pub fn save_frames(path: &Path, video: &Video8) -> Result<()> {
    let view = TensorView::new(Dtype::U8, vec![video.frames, video.height, video.width, 3], &video.data)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let bytes = safetensors::serialize([("frames", view)], None).map_err(|e| Error::format(path, e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_frames(path: &Path) -> Result<Video8> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    let t = st.tensor("frames").map_err(|e| Error::format(path, e.to_string()))?;
    match (t.dtype(), t.shape()) {
        (Dtype::U8, &[n, h, w, 3]) => Video8::new(n, h, w, t.data().to_vec()),
        (dtype, shape) => Err(Error::format(path, format!("frames tensor is {dtype:?} {shape:?}"))),
    }
}

/// Loads frames from either a clip container or a directory of PNG frames.
pub fn load_video_dir(dir: &Path) -> Result<Video8> {
    let st = dir.join(FRAMES_FILE);
    if st.is_file() {
        load_frames(&st)
    } else {
        crate::media::read_png_frames(dir)
    }
}
