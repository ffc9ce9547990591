//! 68-point facial landmarks (iBUG/300-W ordering) and the detector interface.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::similarity::Point;
use crate::error::{Error, Result};
use crate::video::Video8;

pub const NUM_LANDMARKS: usize = 68;
pub const JAW: Range<usize> = 0..17;
pub const NOSE: Range<usize> = 27..36;
/// Eye on the image's left side.
pub const LEFT_EYE: Range<usize> = 36..42;
pub const RIGHT_EYE: Range<usize> = 42..48;
pub const MOUTH: Range<usize> = 48..68;

/// One frame's 68 landmark points in pixel coordinates `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Landmarks(Vec<Point>);

impl TryFrom<Vec<Point>> for Landmarks {
    type Error = Error;
    fn try_from(points: Vec<Point>) -> Result<Self> {
        Landmarks::new(points)
    }
}

impl From<Landmarks> for Vec<Point> {
    fn from(l: Landmarks) -> Self {
        l.0
    }
}

impl Landmarks {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() != NUM_LANDMARKS {
            return Err(Error::Shape(format!("expected 68 landmarks, got {}", points.len())));
        }
        Ok(Self(points))
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    pub fn mean_of(&self, range: Range<usize>) -> Point {
        mean_point(&self.0[range])
    }

    /// Left-eye, right-eye and nose centers: the three alignment anchors.
    pub fn anchors(&self) -> [Point; 3] {
        [self.mean_of(LEFT_EYE), self.mean_of(RIGHT_EYE), self.mean_of(NOSE)]
    }

    pub fn mouth(&self) -> &[Point] {
        &self.0[MOUTH]
    }

    pub fn inter_ocular(&self) -> f64 {
        let [l, r, _] = self.anchors();
        (l[0] - r[0]).hypot(l[1] - r[1])
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Landmarks {
        Landmarks(self.0.iter().map(|&p| f(p)).collect())
    }
}

pub fn mean_point(points: &[Point]) -> Point {
    let n = points.len().max(1) as f64;
    let (x, y) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
    [x / n, y / n]
}

/// A per-frame landmark detector; `None` marks a detection failure.
pub trait LandmarkDetector {
    fn detect(&self, video: &Video8, frame: usize) -> Option<Landmarks>;
}

/// Landmarks produced ahead of time by an external detector, one entry per
/// frame (`null` for frames where detection failed).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LandmarkTrack(pub Vec<Option<Landmarks>>);

impl LandmarkTrack {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&Landmarks> {
        self.0.get(t).and_then(Option::as_ref)
    }
}

impl LandmarkDetector for LandmarkTrack {
    fn detect(&self, _video: &Video8, frame: usize) -> Option<Landmarks> {
        self.get(frame).cloned()
    }
}

/// Mirror-symmetry score of a face; 0 for a perfectly frontal, upright face.
///
/// Sums the spread of the midpoints of left/right landmark pairs around their
/// best-fit axis and the eye-to-nose-tip distance imbalance, both normalized
/// by the inter-ocular distance.
pub fn asymmetry(l: &Landmarks) -> f64 {
    const PAIRS: [(usize, usize); 14] = [
        (0, 16),
        (2, 14),
        (4, 12),
        (6, 10),
        (17, 26),
        (19, 24),
        (21, 22),
        (36, 45),
        (39, 42),
        (37, 44),
        (41, 46),
        (31, 35),
        (48, 54),
        (60, 64),
    ];
    let p = l.points();
    let iod = l.inter_ocular().max(1e-9);
    let mids: Vec<Point> = PAIRS.iter().map(|&(i, j)| [(p[i][0] + p[j][0]) / 2.0, (p[i][1] + p[j][1]) / 2.0]).collect();
    let c = mean_point(&mids);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for m in &mids {
        let (x, y) = (m[0] - c[0], m[1] - c[1]);
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let n = mids.len() as f64;
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let tr = sxx + syy;
    let smallest = tr / 2.0 - ((sxx - syy).powi(2) / 4.0 + sxy * sxy).sqrt();
    let axis_spread = smallest.max(0.0).sqrt() / iod;

    let [le, re, _] = l.anchors();
    let tip = p[30];
    let dl = (le[0] - tip[0]).hypot(le[1] - tip[1]);
    let dr = (re[0] - tip[0]).hypot(re[1] - tip[1]);
    axis_spread + (dl - dr).abs() / iod
}
