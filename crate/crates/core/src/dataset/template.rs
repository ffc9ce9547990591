//! Per-actor template landmarks used as the alignment target.

use std::path::{Path, PathBuf};

use super::landmarks::{asymmetry, Landmarks};
use super::similarity::{estimate_similarity, Point, SimilarityTransform};
use crate::error::{Error, Result};
use crate::video::FRAME_SIZE;

/// Fraction of the frame covered by the larger side of the landmark box.
pub const TEMPLATE_EXTENT: f64 = 0.7;
/// Where the landmark box center lands in a 128×128 frame. Slightly below the
/// middle because the 68 points stop at the brows.
pub const TEMPLATE_CENTER: Point = [64.0, 72.0];

/// Picks the most symmetric candidate and maps it to a canonical upright,
/// centered placement in the aligned frame.
pub fn make_template(candidates: &[Landmarks]) -> Result<Landmarks> {
    let best = candidates
        .iter()
        .min_by(|a, b| asymmetry(a).total_cmp(&asymmetry(b)))
        .ok_or_else(|| Error::InvalidInput("no landmark candidates for template".into()))?;
    canonical_placement(best)
}

/// Rotates `l` so the eyes are level, scales it to [`TEMPLATE_EXTENT`] of the
/// frame and centers it on [`TEMPLATE_CENTER`].
pub fn canonical_placement(l: &Landmarks) -> Result<Landmarks> {
    let [left, right, _] = l.anchors();
    let (dx, dy) = (right[0] - left[0], right[1] - left[1]);
    if dx.hypot(dy) < 1e-9 {
        return Err(Error::DegenerateGeometry("eye centers coincide".into()));
    }
    let level = SimilarityTransform::new(1.0, -dy.atan2(dx), (0.0, 0.0))?;
    let upright = l.map(|p| level.apply(p));
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in upright.points() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = TEMPLATE_EXTENT * FRAME_SIZE as f64 / extent;
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    Ok(upright.map(|p| [TEMPLATE_CENTER[0] + scale * (p[0] - mid[0]), TEMPLATE_CENTER[1] + scale * (p[1] - mid[1])]))
}

pub fn template_path(dir: &Path, actor_id: &str) -> PathBuf {
    dir.join(format!("{actor_id}.json"))
}

pub fn save_template(path: &Path, template: &Landmarks) -> Result<()> {
    std::fs::write(path, serde_json::to_string(template)?).map_err(|e| Error::io(path, e))
}

pub fn load_template(path: &Path) -> Result<Landmarks> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Transform that takes `l` onto the template's anchor points.
pub fn transform_to_template(l: &Landmarks, template: &Landmarks) -> Result<SimilarityTransform> {
    estimate_similarity(&l.anchors(), &template.anchors())
}
