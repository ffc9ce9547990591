//! Train/validation/test manifests over a directory of aligned clips.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clip::{is_clip_dir, load_meta};
use crate::emotion::Emotion;
use crate::error::{Error, Result};

/// Clips shorter than this cannot supply a training window and are skipped.
pub const MIN_CLIP_FRAMES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Clip directory relative to the manifest root.
    pub clip_path: String,
    pub actor_id: String,
    pub sentence_id: String,
    pub emotion: Emotion,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub split_seed: u64,
}

/// Actor, sentence and emotion parsed from a clip name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipName {
    pub actor_id: String,
    pub sentence_id: String,
    pub emotion: Emotion,
}

/// Parses CREMA-D style names: `{actor}_{sentence}_{EMO}[_{level}][.ext]`.
pub fn parse_clip_name(name: &str) -> Result<ClipName> {
    let stem = Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name);
    let parts: Vec<&str> = stem.split('_').collect();
    let bad = || Error::InvalidInput(format!("cannot parse actor/sentence/emotion from clip name {name:?}"));
    if !(3..=4).contains(&parts.len()) || parts[..3].iter().any(|p| p.is_empty()) {
        return Err(bad());
    }
    let emotion = Emotion::from_crema_code(parts[2]).ok_or_else(bad)?;
    Ok(ClipName { actor_id: parts[0].to_string(), sentence_id: parts[1].to_string(), emotion })
}

/// Clip directories below `root`, as sorted root-relative paths.
pub fn find_clip_dirs(root: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if !path.is_dir() {
                continue;
            }
            if is_clip_dir(&path) {
                let rel = path.strip_prefix(root).unwrap_or(&path);
                out.push(rel.to_string_lossy().replace('\\', "/"));
            } else {
                walk(root, &path, out)?;
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

/// Counts per split for `n` clips: `round(r_train n)`, `round(r_val n)`, remainder.
pub fn split_counts(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    let train = ((ratios.0 * n as f64).round() as usize).min(n);
    let val = ((ratios.1 * n as f64).round() as usize).min(n - train);
    (train, val, n - train - val)
}

/// Assigns splits to already-parsed clips with a seeded shuffle.
///
/// The result is independent of the input order.
pub fn assign_splits(mut clips: Vec<(String, ClipName)>, ratios: (f64, f64, f64), seed: u64) -> Manifest {
    clips.sort_by(|a, b| a.0.cmp(&b.0));
    let mut order: Vec<usize> = (0..clips.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val, _) = split_counts(clips.len(), ratios);
    let mut split = vec![Split::Test; clips.len()];
    for (rank, &i) in order.iter().enumerate() {
        split[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let entries = clips
        .into_iter()
        .zip(split)
        .map(|((clip_path, name), split)| ManifestEntry {
            clip_path,
            actor_id: name.actor_id,
            sentence_id: name.sentence_id,
            emotion: name.emotion,
            split,
        })
        .collect();
    Manifest { entries, split_seed: seed }
}

fn scan_clips(root: &Path) -> Result<Vec<(String, ClipName)>> {
    let dirs = find_clip_dirs(root)?;
    if dirs.is_empty() {
        return Err(Error::InvalidInput(format!("no aligned clips under {}", root.display())));
    }
    let mut clips = Vec::with_capacity(dirs.len());
    for rel in dirs {
        let leaf = rel.rsplit('/').next().unwrap_or(&rel);
        let name = parse_clip_name(leaf)?;
        let frames = load_meta(&root.join(&rel))?.frames;
        if frames < MIN_CLIP_FRAMES {
            log::warn!("skipping {rel}: {frames} frames, need at least {MIN_CLIP_FRAMES}");
            continue;
        }
        clips.push((rel, name));
    }
    Ok(clips)
}

/// Scans `root` for aligned clips and splits them by clip count.
pub fn build_manifest(root: &Path, ratios: (f64, f64, f64), seed: u64) -> Result<Manifest> {
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 || ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    Ok(assign_splits(scan_clips(root)?, ratios, seed))
}

/// Scans `root` but takes every clip's split from `split_file`.
///
/// `split_file` is a CSV with at least `clip_path` and `split` columns. Its
/// paths are matched on the clip name (final component without extension), so
/// lists of original video file names work too. Clips absent from the file are
/// left out.
pub fn build_manifest_from_split_file(root: &Path, split_file: &Path) -> Result<Manifest> {
    #[derive(Deserialize)]
    struct Row {
        clip_path: String,
        split: String,
    }
    let key = |p: &str| {
        let leaf = p.rsplit(['/', '\\']).next().unwrap_or(p);
        Path::new(leaf).file_stem().and_then(|s| s.to_str()).unwrap_or(leaf).to_string()
    };
    let mut reader = csv::Reader::from_path(split_file).map_err(|e| Error::format(split_file, e.to_string()))?;
    let mut wanted = HashMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| Error::format(split_file, e.to_string()))?;
        wanted.insert(key(&row.clip_path), row.split.parse::<Split>()?);
    }
    let mut entries = Vec::new();
    for (clip_path, name) in scan_clips(root)? {
        match wanted.get(&key(&clip_path)) {
            Some(&split) => entries.push(ManifestEntry {
                clip_path,
                actor_id: name.actor_id,
                sentence_id: name.sentence_id,
                emotion: name.emotion,
                split,
            }),
            None => log::info!("{clip_path} is not listed in {}", split_file.display()),
        }
    }
    Ok(Manifest { entries, split_seed: 0 })
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn resolve(&self, root: &Path, entry: &ManifestEntry) -> PathBuf {
        root.join(&entry.clip_path)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let entries = reader
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestEntry>, _>>()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(Manifest { entries, split_seed: 0 })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn fake_clips(n: usize) -> Vec<(String, ClipName)> {
        (0..n)
            .map(|i| {
                let name = format!("{}_S{:02}_{}", 1001 + i / 12, i % 12, Emotion::ALL[i % 6].crema_code());
                let parsed = parse_clip_name(&name).unwrap();
                (name, parsed)
            })
            .collect()
    }

    #[test]
    fn parses_crema_names() {
        let n = parse_clip_name("1001_DFA_ANG_XX.flv").unwrap();
        assert_eq!(n.actor_id, "1001");
        assert_eq!(n.sentence_id, "DFA");
        assert_eq!(n.emotion, Emotion::Anger);
        assert_eq!(parse_clip_name("1091_WSI_SAD").unwrap().emotion, Emotion::Sadness);
        assert!(parse_clip_name("nonsense").is_err());
        assert!(parse_clip_name("1001_DFA_XYZ_HI").is_err());
    }

    #[test]
    fn hundred_clips_split_70_15_15() {
        let m = assign_splits(fake_clips(100), (0.7, 0.15, 0.15), 5);
        assert_eq!((m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)), (70, 15, 15));
    }

    #[test]
    fn same_seed_same_manifest_regardless_of_input_order() {
        let a = assign_splits(fake_clips(40), (0.7, 0.15, 0.15), 9);
        let mut reversed = fake_clips(40);
        reversed.reverse();
        let b = assign_splits(reversed, (0.7, 0.15, 0.15), 9);
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
        let c = assign_splits(fake_clips(40), (0.7, 0.15, 0.15), 10);
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip_has_expected_header() {
        let m = assign_splits(fake_clips(7), (0.7, 0.15, 0.15), 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("clip_path,actor_id,sentence_id,emotion,split\n"));
        assert_eq!(Manifest::load(&path).unwrap().entries, m.entries);
    }

    proptest! {
        #[test]
        fn splits_partition_within_one_clip(n in 1usize..400, seed in any::<u64>()) {
            let m = assign_splits(fake_clips(n), (0.7, 0.15, 0.15), seed);
            prop_assert_eq!(m.entries.len(), n);
            let counts = [m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)];
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
            for (c, r) in counts.iter().zip([0.7, 0.15, 0.15]) {
                prop_assert!((*c as f64 - r * n as f64).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
