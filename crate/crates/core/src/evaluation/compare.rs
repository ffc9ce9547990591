//! Registers videos from different systems onto one template so metrics
//! compare the same face region at the same size.

use crate::dataset::align::{anchor_transform, warp_video};
use crate::dataset::landmarks::{LandmarkTrack, Landmarks};
use crate::error::{Error, Result};
use crate::video::{Video8, FRAME_SIZE};

#[derive(Debug, Clone)]
pub struct ComparisonInput {
    pub name: String,
    pub video: Video8,
    /// Landmarks in the input's own pixel coordinates.
    pub landmarks: LandmarkTrack,
}

#[derive(Debug, Clone)]
pub struct Aligned {
    pub name: String,
    /// `FRAME_SIZE × FRAME_SIZE` frames in template coordinates.
    pub video: Video8,
    pub landmarks: LandmarkTrack,
}

/// Maps every input onto `template` with the similarity estimated from its
/// first-frame landmarks and renders a `FRAME_SIZE` square crop. Inputs whose
/// first frame has no landmarks are returned as errors, one per input.
pub fn align_for_comparison(inputs: &[ComparisonInput], template: &Landmarks) -> Vec<Result<Aligned>> {
    inputs
        .iter()
        .map(|input| {
            let first = input
                .landmarks
                .get(0)
                .ok_or_else(|| Error::ClipRejected(format!("{}: no landmarks on the first frame", input.name)))?;
            let transform =
                anchor_transform(first, template).map_err(|e| Error::ClipRejected(format!("{}: {e}", input.name)))?;
            let video = warp_video(&input.video, &transform, FRAME_SIZE, FRAME_SIZE);
            let landmarks = LandmarkTrack(
                input.landmarks.0.iter().map(|l| l.as_ref().map(|l| l.map(|p| transform.apply(p)))).collect(),
            );
            Ok(Aligned { name: input.name.clone(), video, landmarks })
        })
        .collect()
}
