use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use super::assets::read_assets;
use super::bundle::read_bundle;
use super::embeddings::read_embeddings;
use super::manifest::splits_by_video;
use super::types::{Condition, Letter, Manifest, Modality};
use crate::error::Error;

pub const MIN_DURATION_S: f64 = 60.0;
pub const MAX_DURATION_S: f64 = 300.0;
pub const EVIDENCE_WINDOW_S: f64 = 10.0;

const CHECKS: [&str; 10] = [
    "unique_sample_id",
    "split_completeness",
    "letter_matches_split",
    "subcategory_matches_split",
    "duration_range",
    "evidence_window",
    "bundle_readable",
    "bundle_shape",
    "assets",
    "embeddings",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<String>,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckCount {
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_samples: usize,
    /// Modal bundle shape `(n_layers, d_hidden)`; odd ones out are flagged.
    pub bundle_shape: Option<(usize, usize)>,
    pub checks: BTreeMap<String, CheckCount>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn n_failures(&self) -> usize {
        self.violations.len()
    }

    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(!self.is_ok())
    }
}

struct Collector {
    checks: BTreeMap<String, CheckCount>,
    violations: Vec<Violation>,
}

impl Collector {
    fn record(&mut self, check: &str, sample_id: Option<&str>, outcome: Result<(), (String, String)>) {
        let c = self.checks.entry(check.to_string()).or_default();
        match outcome {
            Ok(()) => c.passed += 1,
            Err((kind, message)) => {
                c.failed += 1;
                self.violations.push(Violation {
                    check: check.to_string(),
                    sample_id: sample_id.map(str::to_string),
                    kind,
                    message,
                });
            }
        }
    }
}

fn fail<T: Into<String>>(kind: &str, msg: T) -> Result<(), (String, String)> {
    Err((kind.to_string(), msg.into()))
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "IoError",
        Error::Format(_) => "FormatError",
        Error::Shape(_) => "ShapeError",
        Error::NonFinite(_) => "NonFiniteError",
        _ => "Error",
    }
}

/// Checks every invariant of a manifest and the files it references.
/// Problems are collected, never thrown; the function is pure in its inputs.
pub fn validate_dataset(manifest: &Manifest) -> ValidationReport {
    let mut col = Collector {
        checks: CHECKS.iter().map(|c| (c.to_string(), CheckCount::default())).collect(),
        violations: Vec::new(),
    };
    let mut samples: Vec<_> = manifest.samples.iter().collect();
    samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let mut seen = HashSet::new();
    for s in &samples {
        let ok = if seen.insert(s.sample_id.as_str()) {
            Ok(())
        } else {
            fail("SchemaError", "duplicate sample_id")
        };
        col.record("unique_sample_id", Some(&s.sample_id), ok);
    }

    for (video, splits) in splits_by_video(manifest) {
        let ok = if splits.len() == 4 && splits.values().all(|&n| n == 1) {
            Ok(())
        } else {
            fail(
                "SchemaError",
                format!("video {video} has splits {:?}", splits.keys().map(|k| k.as_str()).collect::<Vec<_>>()),
            )
        };
        col.record("split_completeness", None, ok);
    }

    for s in &samples {
        let id = Some(s.sample_id.as_str());
        let letter_ok = match (s.split.condition, s.split.modality) {
            (Condition::Standard, _) if s.correct_letter.is_content() => Ok(()),
            (Condition::Misleading, Modality::Vision) if s.correct_letter == Letter::E => Ok(()),
            (Condition::Misleading, Modality::Audio) if s.correct_letter == Letter::F => Ok(()),
            _ => fail(
                "SchemaError",
                format!("letter {} invalid for split {}", s.correct_letter, s.split),
            ),
        };
        col.record("letter_matches_split", id, letter_ok);

        let sub_ok = match (s.split.condition, s.misleading_subcategory) {
            (Condition::Standard, None) => Ok(()),
            (Condition::Misleading, Some(c)) if c.modality() == s.split.modality => Ok(()),
            (c, sub) => fail(
                "SchemaError",
                format!("subcategory {sub:?} invalid for {c:?} {}", s.split),
            ),
        };
        col.record("subcategory_matches_split", id, sub_ok);

        let dur_ok = if (MIN_DURATION_S..=MAX_DURATION_S).contains(&s.duration_s) {
            Ok(())
        } else {
            fail(
                "RangeError",
                format!("duration_s {} outside [{MIN_DURATION_S}, {MAX_DURATION_S}]", s.duration_s),
            )
        };
        col.record("duration_range", id, dur_ok);

        let width = s.answer_ts_end_s - s.answer_ts_start_s;
        let win_ok = if (width - EVIDENCE_WINDOW_S).abs() > 1e-6 {
            fail("RangeError", format!("evidence window is {width} s, expected 10"))
        } else if s.answer_ts_start_s < 0.0 || s.answer_ts_end_s > s.duration_s + 1e-6 {
            fail(
                "RangeError",
                format!(
                    "evidence [{}, {}] not within [0, {}]",
                    s.answer_ts_start_s, s.answer_ts_end_s, s.duration_s
                ),
            )
        } else {
            Ok(())
        };
        col.record("evidence_window", id, win_ok);
    }

    // Bundles: read each once, then compare against the modal shape.
    let mut shapes = Vec::new();
    for s in &samples {
        match read_bundle(&manifest.resolve(&s.bundle_path), None) {
            Ok(b) => {
                col.record("bundle_readable", Some(&s.sample_id), Ok(()));
                shapes.push((s.sample_id.as_str(), Some(b.shape())));
            }
            Err(e) => {
                col.record("bundle_readable", Some(&s.sample_id), fail(error_kind(&e), e.to_string()));
                shapes.push((s.sample_id.as_str(), None));
            }
        }
    }
    let mut freq: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (_, shape) in &shapes {
        if let Some(sh) = shape {
            *freq.entry(*sh).or_default() += 1;
        }
    }
    let modal = freq
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(sh, _)| *sh);
    for (id, shape) in &shapes {
        if let (Some(sh), Some(m)) = (shape, modal) {
            let ok = if *sh == m {
                Ok(())
            } else {
                fail("ShapeError", format!("bundle shape {sh:?} != dataset shape {m:?}"))
            };
            col.record("bundle_shape", Some(id), ok);
        }
    }

    if let Some(p) = &manifest.assets_path {
        let ok = match read_assets(&manifest.resolve(p)) {
            Err(e) => fail(error_kind(&e), e.to_string()),
            Ok(a) => {
                if modal.is_some_and(|(_, d)| d != a.d_hidden) {
                    fail("ShapeError", format!("assets d_hidden {} != bundles", a.d_hidden))
                } else if let Some(s) = samples
                    .iter()
                    .find(|s| !a.correct_token_ids.contains_key(&s.sample_id))
                {
                    fail("SchemaError", format!("no correct token id for {}", s.sample_id))
                } else {
                    Ok(())
                }
            }
        };
        col.record("assets", None, ok);
    }

    if let Some(p) = &manifest.embeddings_path {
        let ok = match read_embeddings(&manifest.resolve(p)) {
            Err(e) => fail(error_kind(&e), e.to_string()),
            Ok(t) => match samples.iter().find(|s| t.get(&s.sample_id).is_none()) {
                Some(s) => fail("SchemaError", format!("no embedding row for {}", s.sample_id)),
                None if t.rows.len() != samples.len() => fail(
                    "SchemaError",
                    format!("{} embedding rows for {} samples", t.rows.len(), samples.len()),
                ),
                None => Ok(()),
            },
        };
        col.record("embeddings", None, ok);
    }

    ValidationReport {
        n_samples: samples.len(),
        bundle_shape: modal,
        checks: col.checks,
        violations: col.violations,
    }
}
