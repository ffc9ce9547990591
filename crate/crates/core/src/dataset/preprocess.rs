//! Batch preprocessing of a raw corpus into aligned clips plus a manifest.
//!
//! Raw clips are found by their video file. Each `{name}.y4m` needs a
//! `{name}.wav` next to it and a `{name}.landmarks.json` track produced by an
//! external landmark detector (one entry per source frame, `null` on failure).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::align::{align_clip, RawClip};
use super::clip::save_clip;
use super::landmarks::{LandmarkTrack, Landmarks};
use super::manifest::{build_manifest, build_manifest_from_split_file, parse_clip_name, Manifest};
use super::template::{load_template, make_template, save_template, template_path};
use crate::error::{Error, Result};
use crate::media::{read_wav, read_y4m};

pub const CLIPS_DIR: &str = "clips";
pub const TEMPLATES_DIR: &str = "templates";
pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RawSource {
    pub name: String,
    pub video: PathBuf,
    pub audio: PathBuf,
    pub landmarks: PathBuf,
}

/// All `.y4m` files below `raw_dir`, sorted by path.
pub fn find_raw_clips(raw_dir: &Path) -> Result<Vec<RawSource>> {
    fn walk(dir: &Path, out: &mut Vec<RawSource>) -> Result<()> {
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("y4m")) {
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                out.push(RawSource {
                    audio: path.with_extension("wav"),
                    landmarks: path.with_file_name(format!("{name}.landmarks.json")),
                    video: path,
                    name,
                });
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(raw_dir, &mut out)?;
    out.sort();
    Ok(out)
}

pub fn load_raw_clip(src: &RawSource) -> Result<(RawClip, LandmarkTrack)> {
    let name = parse_clip_name(&src.name)?;
    let y4m = read_y4m(&src.video)?;
    let audio = read_wav(&src.audio)?;
    let track = LandmarkTrack::load(&src.landmarks)?;
    if track.len() != y4m.video.frames {
        return Err(Error::ClipRejected(format!("{} landmark entries for {} frames", track.len(), y4m.video.frames)));
    }
    let raw = RawClip {
        video: y4m.video,
        fps: y4m.fps,
        audio,
        actor_id: name.actor_id,
        sentence_id: name.sentence_id,
        emotion: name.emotion,
    };
    Ok((raw, track))
}

/// One template per actor, chosen among the first-frame landmarks of that
/// actor's clips. Sources with unreadable names or tracks are skipped.
pub fn build_templates(sources: &[RawSource]) -> Result<BTreeMap<String, Landmarks>> {
    let mut candidates: BTreeMap<String, Vec<Landmarks>> = BTreeMap::new();
    for src in sources {
        let Ok(name) = parse_clip_name(&src.name) else { continue };
        let Ok(track) = LandmarkTrack::load(&src.landmarks) else { continue };
        if let Some(first) = track.get(0) {
            candidates.entry(name.actor_id).or_default().push(first.clone());
        }
    }
    candidates.into_iter().map(|(actor, c)| Ok((actor, make_template(&c)?))).collect()
}

pub fn save_templates(dir: &Path, templates: &BTreeMap<String, Landmarks>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (actor, t) in templates {
        save_template(&template_path(dir, actor), t)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum SplitPolicy {
    Ratios { ratios: (f64, f64, f64), seed: u64 },
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    pub split: SplitPolicy,
    /// Directory of `{actor}.json` templates to use instead of building them.
    pub templates: Option<PathBuf>,
}

#[derive(Debug)]
pub struct PreprocessSummary {
    pub aligned: Vec<String>,
    /// Source name and reason.
    pub rejected: Vec<(String, String)>,
    pub manifest: Manifest,
}

/// Aligns every raw clip under `raw_dir` into `{out}/clips`, writes the
/// templates used to `{out}/templates` and the manifest to `{out}/manifest.csv`.
///
/// Clips that fail to load or align are skipped and reported. Fails if no
/// clip survives.
pub fn preprocess(raw_dir: &Path, out: &Path, opts: &PreprocessOptions) -> Result<PreprocessSummary> {
    let sources = find_raw_clips(raw_dir)?;
    if sources.is_empty() {
        return Err(Error::InvalidInput(format!("no .y4m videos under {}", raw_dir.display())));
    }
    let templates = match &opts.templates {
        Some(dir) => {
            let mut map = BTreeMap::new();
            for src in &sources {
                if let Ok(name) = parse_clip_name(&src.name) {
                    if !map.contains_key(&name.actor_id) {
                        let t = load_template(&template_path(dir, &name.actor_id))?;
                        map.insert(name.actor_id, t);
                    }
                }
            }
            map
        }
        None => build_templates(&sources)?,
    };
    save_templates(&out.join(TEMPLATES_DIR), &templates)?;

    let clips_dir = out.join(CLIPS_DIR);
    std::fs::create_dir_all(&clips_dir).map_err(|e| Error::io(&clips_dir, e))?;
    let mut aligned = Vec::new();
    let mut rejected = Vec::new();
    for src in &sources {
        let result = load_raw_clip(src).and_then(|(raw, track)| {
            let template = templates
                .get(&raw.actor_id)
                .ok_or_else(|| Error::ClipRejected(format!("no template for actor {}", raw.actor_id)))?;
            let clip = align_clip(&raw, template, &track)?;
            save_clip(&clips_dir.join(clip.name()), &clip)?;
            Ok(clip.name())
        });
        match result {
            Ok(name) => aligned.push(name),
            Err(e) => {
                log::warn!("rejected {}: {e}", src.name);
                rejected.push((src.name.clone(), e.to_string()));
            }
        }
    }
    if aligned.is_empty() {
        return Err(Error::InvalidInput(format!("none of {} raw clips could be aligned", sources.len())));
    }
    let manifest = match &opts.split {
        SplitPolicy::Ratios { ratios, seed } => build_manifest(out, *ratios, *seed)?,
        SplitPolicy::File(path) => build_manifest_from_split_file(out, path)?,
    };
    manifest.save(&out.join(MANIFEST_FILE))?;
    Ok(PreprocessSummary { aligned, rejected, manifest })
}
