//! Synthetic talking faces: a drawn face whose mouth opening follows the
//! loudness of a generated tone. Used for smoke runs, demos and tests where
//! no recorded corpus is available.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::align::{AlignedClip, SourceInfo};
use super::landmarks::{LandmarkTrack, Landmarks, NUM_LANDMARKS};
use super::similarity::{Point, SimilarityTransform};
use crate::emotion::Emotion;
use crate::error::Result;
use crate::media::{write_wav, write_y4m, Audio};
use crate::video::{Video8, AUDIO_RATE, FRAME_SIZE, SAMPLES_PER_FRAME, VIDEO_FPS};

/// A plausible frontal 68-point face roughly centered in a 128×128 frame.
pub fn canonical_face() -> Landmarks {
    let mut p = vec![[0.0; 2]; NUM_LANDMARKS];
    for (i, q) in p.iter_mut().take(17).enumerate() {
        let a = PI * (i as f64) / 16.0;
        *q = [64.0 - 40.0 * a.cos(), 60.0 + 45.0 * a.sin()];
    }
    for i in 0..5 {
        p[17 + i] = [34.0 + 6.0 * i as f64, 42.0 - (i as f64 - 2.0).abs()];
        p[26 - i] = [94.0 - 6.0 * i as f64, 42.0 - (i as f64 - 2.0).abs()];
    }
    for i in 0..4 {
        p[27 + i] = [64.0, 52.0 + 6.0 * i as f64];
    }
    for i in 0..5 {
        p[31 + i] = [56.0 + 4.0 * i as f64, 78.0 + (i as f64 - 2.0).abs() * -0.5];
    }
    let eye = |cx: f64| -> Vec<Point> {
        (0..6)
            .map(|k| {
                let a = PI * k as f64 / 3.0;
                [cx - 7.0 * a.cos(), 52.0 - 3.0 * a.sin()]
            })
            .collect()
    };
    p[36..42].copy_from_slice(&eye(46.0));
    p[42..48].copy_from_slice(&eye(82.0));
    for k in 0..12 {
        let a = TAU * k as f64 / 12.0;
        p[48 + k] = [64.0 - 16.0 * a.cos(), 92.0 - 6.0 * a.sin()];
    }
    for k in 0..8 {
        let a = TAU * k as f64 / 8.0;
        p[60 + k] = [64.0 - 10.0 * a.cos(), 92.0 - 2.5 * a.sin()];
    }
    Landmarks::new(p).expect("68 points")
}

/// Per-emotion drawing parameters: brow lift, mouth-corner curl, mouth
/// width scale and a skin tint.
fn expression(e: Emotion) -> (f64, f64, f64, [f64; 3]) {
    match e {
        Emotion::Anger => (-5.0, -2.0, 0.9, [30.0, -10.0, -10.0]),
        Emotion::Disgust => (-2.0, -4.0, 0.8, [-5.0, 15.0, -10.0]),
        Emotion::Fear => (6.0, -1.0, 0.8, [-15.0, -15.0, 10.0]),
        Emotion::Happiness => (2.0, 5.0, 1.25, [15.0, 10.0, 0.0]),
        Emotion::Neutral => (0.0, 0.0, 1.0, [0.0, 0.0, 0.0]),
        Emotion::Sadness => (3.0, -5.0, 0.9, [-10.0, -5.0, 15.0]),
    }
}

/// Smooth mouth-opening envelope in `[0, 1]`, one value per frame.
fn envelope(frames: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let parts: Vec<(f64, f64)> = (0..3).map(|_| (rng.random_range(0.05..0.4), rng.random_range(0.0..TAU))).collect();
    (0..frames)
        .map(|t| {
            let s: f64 = parts.iter().map(|(f, ph)| (f * t as f64 + ph).sin()).sum::<f64>() / 3.0;
            (0.5 + 0.5 * s).clamp(0.0, 1.0).powf(1.5)
        })
        .collect()
}

fn fill_ellipse(img: &mut [u8], center: Point, radii: (f64, f64), color: [f64; 3]) {
    let size = FRAME_SIZE;
    let (x0, x1) =
        ((center[0] - radii.0).floor().max(0.0) as usize, (center[0] + radii.0).ceil().min(size as f64 - 1.0) as usize);
    let (y0, y1) =
        ((center[1] - radii.1).floor().max(0.0) as usize, (center[1] + radii.1).ceil().min(size as f64 - 1.0) as usize);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = (x as f64 - center[0]) / radii.0;
            let dy = (y as f64 - center[1]) / radii.1;
            if dx * dx + dy * dy <= 1.0 {
                let i = (y * size + x) * 3;
                for c in 0..3 {
                    img[i + c] = color[c].round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
}

/// A synthetic aligned clip of `frames` frames at 25 fps with 8 kHz audio.
/// Identity (background, skin, voice pitch) follows `actor_seed`; mouth
/// motion and loudness follow `seed`; the drawn expression follows `emotion`.
pub fn synthetic_clip(actor_seed: u64, seed: u64, emotion: Emotion, frames: usize) -> AlignedClip {
    let mut actor_rng = ChaCha8Rng::seed_from_u64(actor_seed);
    let background: [f64; 3] = std::array::from_fn(|_| actor_rng.random_range(20.0..120.0));
    let skin: [f64; 3] = [
        actor_rng.random_range(170.0..230.0),
        actor_rng.random_range(120.0..170.0),
        actor_rng.random_range(90.0..140.0),
    ];
    let pitch = actor_rng.random_range(110.0..260.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ actor_seed.rotate_left(17));
    let env = envelope(frames, &mut rng);
    let (brow, curl, width, tint) = expression(emotion);
    let skin: [f64; 3] = std::array::from_fn(|c| skin[c] + tint[c]);

    let base = canonical_face();
    let mut video = Video8::filled(frames, FRAME_SIZE, FRAME_SIZE, 0);
    let mut track = Vec::with_capacity(frames);
    for (t, &open) in env.iter().enumerate() {
        let img = video.frame_mut(t);
        for px in img.chunks_exact_mut(3) {
            for c in 0..3 {
                px[c] = background[c] as u8;
            }
        }
        fill_ellipse(img, [64.0, 68.0], (40.0, 48.0), skin);
        for cx in [46.0, 82.0] {
            fill_ellipse(img, [cx, 52.0], (7.0, 3.5), [245.0, 245.0, 245.0]);
            fill_ellipse(img, [cx, 52.0], (2.5, 2.5), [30.0, 30.0, 30.0]);
            let tilt = if cx < 64.0 { -curl * 0.3 } else { curl * 0.3 };
            fill_ellipse(img, [cx, 42.0 - brow + tilt], (9.0, 1.8), [60.0, 40.0, 30.0]);
        }
        let half_h = 1.5 + 7.0 * open;
        let half_w = 16.0 * width;
        fill_ellipse(img, [64.0, 92.0 - curl * 0.4], (half_w, half_h), [120.0, 30.0, 40.0]);
        fill_ellipse(img, [64.0, 92.0 - curl * 0.4], (half_w * 0.7, half_h * 0.6), [40.0, 10.0, 15.0]);
        track.push(Some(base.map(|p| {
            // Only mouth points (y > 84 near the center line) open and stretch.
            if p[1] > 84.0 && (p[0] - 64.0).abs() <= 17.0 {
                let dy = (p[1] - 92.0) * half_h / 6.0;
                [64.0 + (p[0] - 64.0) * width, 92.0 - curl * 0.4 + dy]
            } else {
                p
            }
        })));
    }

    let samples = (0..frames * SAMPLES_PER_FRAME)
        .map(|i| {
            let t = i as f64 / AUDIO_RATE as f64;
            let f = i / SAMPLES_PER_FRAME;
            let next = env[(f + 1).min(frames - 1)];
            let frac = (i % SAMPLES_PER_FRAME) as f64 / SAMPLES_PER_FRAME as f64;
            let amp = env[f] * (1.0 - frac) + next * frac;
            (0.5 * amp * ((TAU * pitch * t).sin() + 0.3 * (TAU * 2.0 * pitch * t).sin())) as f32
        })
        .collect();

    AlignedClip {
        video,
        audio: Audio::new(samples, AUDIO_RATE),
        landmarks: LandmarkTrack(track),
        emotion,
        actor_id: format!("{}", 1000 + actor_seed % 1000),
        sentence_id: format!("S{:02}", seed % 100),
        source: SourceInfo { fps: 25.0, sample_rate: AUDIO_RATE, transform: SimilarityTransform::IDENTITY },
    }
}

/// Writes `clip` as a raw source for preprocessing: `{name}.y4m`,
/// `{name}.wav` and `{name}.landmarks.json` in `dir`.
pub fn write_raw(dir: &Path, clip: &AlignedClip) -> Result<()> {
    let name = clip.name();
    write_y4m(&dir.join(format!("{name}.y4m")), &clip.video, VIDEO_FPS)?;
    write_wav(&dir.join(format!("{name}.wav")), &clip.audio)?;
    clip.landmarks.save(&dir.join(format!("{name}.landmarks.json")))
}
