//! Per-clip metric evaluation and the aggregated report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{nlmd, psnr, ssim, Nlmd, LANDMARK_FAILURE_FLAG, PSNR_CAP, SSIM_SIGMA, SSIM_WINDOW};
use crate::dataset::clip::{load_video_dir, LANDMARKS_FILE};
use crate::dataset::landmarks::LandmarkTrack;
use crate::error::{Error, Result};
use crate::media::read_y4m;
use crate::video::Video8;

/// A video with optional landmarks, as found on disk.
#[derive(Debug, Clone)]
pub struct EvalVideo {
    pub name: String,
    pub video: Video8,
    pub landmarks: Option<LandmarkTrack>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub name: String,
    pub frames: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub nlmd: Option<f64>,
    pub landmark_frames_dropped: Option<usize>,
    pub landmark_failure_rate: Option<f64>,
    pub flagged: bool,
}

/// How the numbers in a [`MetricReport`] were computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConventions {
    pub pixel_scale: String,
    pub psnr_cap_db: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub nlmd_normalizer: String,
    pub landmark_failure_flag: f64,
}

impl Default for MetricConventions {
    fn default() -> Self {
        Self {
            pixel_scale: "8-bit frames, round((x + 1) * 127.5) for generated output".into(),
            psnr_cap_db: PSNR_CAP,
            ssim_window: SSIM_WINDOW,
            ssim_sigma: SSIM_SIGMA,
            nlmd_normalizer: "per-frame inter-ocular distance (eye-center landmarks) of the ground truth; \
                              absolute values are comparable only under the same normalizer"
                .into(),
            landmark_failure_flag: LANDMARK_FAILURE_FLAG,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub clips: Vec<ClipMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// Mean over clips that had landmarks on both sides.
    pub mean_nlmd: Option<f64>,
    pub conventions: MetricConventions,
}

/// Metrics for one generated/ground-truth pair. Videos of different length
/// are compared over their common prefix.
pub fn evaluate_pair(gen: &EvalVideo, gt: &EvalVideo) -> Result<ClipMetrics> {
    let n = gen.video.frames.min(gt.video.frames);
    if n == 0 {
        return Err(Error::InvalidInput(format!("{}: empty video", gen.name)));
    }
    let a = gen.video.slice(0, n)?;
    let b = gt.video.slice(0, n)?;
    let lm: Option<Nlmd> = match (&gen.landmarks, &gt.landmarks) {
        (Some(g), Some(t)) => {
            let (g, t) = (&g.0[..n.min(g.len())], &t.0[..n.min(t.len())]);
            let m = g.len().min(t.len());
            match nlmd(&g[..m], &t[..m]) {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("{}: NLMD skipped: {e}", gen.name);
                    None
                }
            }
        }
        _ => None,
    };
    Ok(ClipMetrics {
        name: gen.name.clone(),
        frames: n,
        psnr: psnr(&a, &b)?,
        ssim: ssim(&a, &b)?,
        nlmd: lm.map(|r| r.value),
        landmark_frames_dropped: lm.map(|r| r.dropped),
        landmark_failure_rate: lm.map(|r| r.failure_rate),
        flagged: lm.is_some_and(|r| r.flagged),
    })
}

impl MetricReport {
    pub fn from_clips(clips: Vec<ClipMetrics>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::InvalidInput("no clips were evaluated".into()));
        }
        let n = clips.len() as f64;
        let nl: Vec<f64> = clips.iter().filter_map(|c| c.nlmd).collect();
        Ok(Self {
            mean_psnr: clips.iter().map(|c| c.psnr).sum::<f64>() / n,
            mean_ssim: clips.iter().map(|c| c.ssim).sum::<f64>() / n,
            mean_nlmd: (!nl.is_empty()).then(|| nl.iter().sum::<f64>() / nl.len() as f64),
            clips,
            conventions: MetricConventions::default(),
        })
    }

    /// Writes `metrics.csv` (one row per clip) and `metrics.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
        for c in &self.clips {
            w.serialize(c)?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
        let path = dir.join("metrics.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }
}

/// Loads a video from a clip directory, a PNG frame directory or a `.y4m`
/// file. Landmarks come from `landmarks.json` inside a directory or from
/// `{stem}.landmarks.json` next to a file.
pub fn load_eval_video(path: &Path) -> Result<EvalVideo> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    let (video, lm_path) = if path.is_dir() {
        (load_video_dir(path)?, path.join(LANDMARKS_FILE))
    } else {
        (read_y4m(path)?.video, path.with_file_name(format!("{name}.landmarks.json")))
    };
    let landmarks = if lm_path.is_file() { Some(LandmarkTrack::load(&lm_path)?) } else { None };
    Ok(EvalVideo { name, video, landmarks })
}

fn entries(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        let is_video = p.is_dir() || p.extension().is_some_and(|x| x == "y4m");
        if let (true, Some(stem)) = (is_video, p.file_stem().and_then(|s| s.to_str())) {
            out.push((stem.to_string(), p.clone()));
        }
    }
    out.sort();
    Ok(out)
}

/// Evaluates every generated video in `gen_dir` against the ground truth of
/// the same name in `gt_dir`. Unmatched names are skipped with a warning.
pub fn evaluate_directories(gen_dir: &Path, gt_dir: &Path) -> Result<MetricReport> {
    let gt: std::collections::HashMap<String, PathBuf> = entries(gt_dir)?.into_iter().collect();
    let mut clips = Vec::new();
    for (name, path) in entries(gen_dir)? {
        let Some(gt_path) = gt.get(&name) else {
            log::warn!("{name}: no ground truth in {}", gt_dir.display());
            continue;
        };
        let gen = load_eval_video(&path)?;
        let truth = load_eval_video(gt_path)?;
        clips.push(evaluate_pair(&gen, &truth)?);
    }
    MetricReport::from_clips(clips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::clip::save_clip;
    use crate::dataset::synth::synthetic_clip;
    use crate::emotion::Emotion;

    #[test]
    fn identical_directories_give_identity_metrics() {
        let (gen, gt) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for (i, e) in [Emotion::Anger, Emotion::Fear].into_iter().enumerate() {
            let clip = synthetic_clip(i as u64, 3, e, 4);
            save_clip(&gen.path().join(clip.name()), &clip).unwrap();
            save_clip(&gt.path().join(clip.name()), &clip).unwrap();
        }
        let r = evaluate_directories(gen.path(), gt.path()).unwrap();
        assert_eq!(r.clips.len(), 2);
        assert_eq!(r.mean_psnr, PSNR_CAP);
        assert!((r.mean_ssim - 1.0).abs() < 1e-12);
        assert_eq!(r.mean_nlmd, Some(0.0));
        let out = tempfile::tempdir().unwrap();
        r.save(out.path()).unwrap();
        let back: MetricReport =
            serde_json::from_str(&std::fs::read_to_string(out.path().join("metrics.json")).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(MetricReport::from_clips(vec![]).is_err());
    }
}
