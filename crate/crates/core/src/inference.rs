//! Generation from a trained checkpoint: input preparation and output files.

use std::path::{Path, PathBuf};

use tch::Device;

use crate::dataset::align::{anchor_transform, warp_video};
use crate::dataset::landmarks::Landmarks;
use crate::dataset::template::canonical_placement;
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::media::{resize, write_png_frames, write_wav, write_y4m, Audio};
use crate::training::checkpoint::{load_variables, read_checkpoint, CheckpointKind, CheckpointMeta};
use crate::video::{Video8, AUDIO_RATE, FRAME_SIZE, VIDEO_FPS};

/// Loads the generator weights of a training checkpoint (either stage).
pub fn load_generator(path: &Path, device: Device) -> Result<(Generator, CheckpointMeta)> {
    let ck = read_checkpoint(path)?;
    if ck.meta.kind != CheckpointKind::Gan {
        return Err(Error::Config(format!("{} is not a generator checkpoint", path.display())));
    }
    let mut generator = Generator::new(&ck.meta.config.model, device)?;
    load_variables(&mut generator.vs, &ck.tensors, "generator")?;
    Ok((generator, ck.meta))
}

/// Turns a still image into the generator's 128×128 condition frame.
///
/// With landmarks the face is registered onto `template`, or onto the
/// canonical placement of its own landmarks when no template is given.
/// Without landmarks the image is only resized.
pub fn prepare_image(image: &Video8, landmarks: Option<&Landmarks>, template: Option<&Landmarks>) -> Result<Video8> {
    if image.frames == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let first = image.first_frame();
    match landmarks {
        Some(lm) => {
            let target = match template {
                Some(t) => t.clone(),
                None => canonical_placement(lm)?,
            };
            let transform = anchor_transform(lm, &target)?;
            Ok(warp_video(&first, &transform, FRAME_SIZE, FRAME_SIZE))
        }
        None if first.height == FRAME_SIZE && first.width == FRAME_SIZE => Ok(first),
        None => Ok(resize(&first, FRAME_SIZE, FRAME_SIZE)),
    }
}

/// Generates an 8-bit video for `audio` (any rate; converted to 8 kHz) from a
/// prepared condition frame. One frame per 40 ms, rounding up.
pub fn synthesize(generator: &Generator, audio: &Audio, image: &Video8, emotion: Emotion, seed: u64) -> Result<Video8> {
    let audio = audio.resample(AUDIO_RATE)?;
    let cond = image.first_frame().to_tensor(generator.device());
    let out = generator.generate(&audio.samples, &cond, emotion, seed)?;
    Video8::from_tensor(&out.video)
}

/// Files written for one generated video.
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub video: PathBuf,
    pub audio: PathBuf,
    pub frames: Option<PathBuf>,
}

/// Writes `{stem}.y4m` (25 FPS) and `{stem}.wav` with the driving audio, plus
/// lossless `{stem}_frames/` PNGs when `png_frames` is set.
pub fn write_outputs(dir: &Path, stem: &str, video: &Video8, audio: &Audio, png_frames: bool) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = OutputFiles {
        video: dir.join(format!("{stem}.y4m")),
        audio: dir.join(format!("{stem}.wav")),
        frames: png_frames.then(|| dir.join(format!("{stem}_frames"))),
    };
    write_y4m(&files.video, video, VIDEO_FPS)?;
    write_wav(&files.audio, audio)?;
    if let Some(frames) = &files.frames {
        write_png_frames(frames, video)?;
    }
    Ok(files)
}
