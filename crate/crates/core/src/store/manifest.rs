use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::types::{Manifest, SplitLabel, FORMAT_VERSION};
use crate::error::{Error, Result};

const REQUIRED_TOP: [&str; 3] = ["format_version", "model_name", "samples"];
const REQUIRED_SAMPLE: [&str; 9] = [
    "sample_id",
    "video_id",
    "split",
    "question_type",
    "duration_s",
    "answer_ts_start_s",
    "answer_ts_end_s",
    "correct_letter",
    "bundle_path",
];

/// Loads and structurally checks a manifest. Bundles and assets are not opened.
///
/// Malformed JSON and unknown enum strings are [`Error::Parse`]; missing
/// fields, duplicate ids and incomplete 2x2 videos are [`Error::Schema`].
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(&text)?;
    manifest.base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok(manifest)
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("manifest json: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Schema("manifest must be a JSON object".into()))?;
    for key in REQUIRED_TOP {
        if !obj.contains_key(key) {
            return Err(Error::Schema(format!("manifest: missing field `{key}`")));
        }
    }
    let samples = obj["samples"]
        .as_array()
        .ok_or_else(|| Error::Schema("manifest: `samples` must be an array".into()))?;
    for (i, s) in samples.iter().enumerate() {
        let so = s
            .as_object()
            .ok_or_else(|| Error::Schema(format!("sample #{i} is not an object")))?;
        for key in REQUIRED_SAMPLE {
            if !so.contains_key(key) {
                return Err(Error::Schema(format!("sample #{i}: missing field `{key}`")));
            }
        }
    }
    let manifest: Manifest =
        serde_json::from_value(value).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    check_structure(&manifest)?;
    Ok(manifest)
}

/// Version, unique sample ids, and exactly the four splits per video.
pub fn check_structure(manifest: &Manifest) -> Result<()> {
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    let mut seen = HashSet::new();
    for s in &manifest.samples {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(Error::Schema(format!("duplicate sample_id {}", s.sample_id)));
        }
    }
    for (video, splits) in splits_by_video(manifest) {
        if splits.len() != 4 || splits.values().any(|&n| n != 1) {
            let have: Vec<_> = splits.keys().map(|s| s.as_str()).collect();
            return Err(Error::Schema(format!(
                "video {video} must have exactly one sample per split, has {have:?}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn splits_by_video(manifest: &Manifest) -> BTreeMap<&str, BTreeMap<SplitLabel, usize>> {
    let mut map: BTreeMap<&str, BTreeMap<SplitLabel, usize>> = BTreeMap::new();
    for s in &manifest.samples {
        *map.entry(s.video_id.as_str())
            .or_default()
            .entry(s.split)
            .or_default() += 1;
    }
    map
}

pub fn manifest_to_json(manifest: &Manifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    fs::write(path, manifest_to_json(manifest)).map_err(|e| Error::io(path, e))
}

/// Distinct video ids in sorted order.
pub fn video_ids(manifest: &Manifest) -> BTreeSet<&str> {
    manifest.samples.iter().map(|s| s.video_id.as_str()).collect()
}
