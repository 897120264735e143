//! Per-split accuracy, balanced accuracy, interference deltas, judge
//! aggregates and answer-letter parsing. Percentages throughout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{Letter, SplitLabel};

/// Rounds to one decimal, halves away from zero. Values within 1e-9 of a
/// half are treated as the half, so decimal inputs like 37.35 round up.
pub fn round1(x: f64) -> f64 {
    let y = x * 10.0;
    (y + y.signum() * 1e-9).round() / 10.0
}

/// `((std_v + std_a) / 2 + (mis_v + mis_a) / 2) / 2`.
pub fn balanced_from(std_v: f64, std_a: f64, mis_v: f64, mis_a: f64) -> f64 {
    ((std_v + std_a) / 2.0 + (mis_v + mis_a) / 2.0) / 2.0
}

/// Balanced accuracy from accuracies keyed by split name.
pub fn balanced_accuracy(acc: &BTreeMap<String, f64>) -> Result<f64> {
    let get = |s: SplitLabel| {
        acc.get(s.as_str())
            .copied()
            .ok_or_else(|| Error::MissingSplit(s.as_str().to_string()))
    };
    Ok(balanced_from(
        get(SplitLabel::STD_V)?,
        get(SplitLabel::STD_A)?,
        get(SplitLabel::MIS_V)?,
        get(SplitLabel::MIS_A)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub acc: BTreeMap<String, f64>,
    pub bal: f64,
    #[serde(default)]
    pub n: BTreeMap<String, usize>,
}

impl SplitReport {
    pub fn from_accuracies(acc: BTreeMap<String, f64>) -> Result<Self> {
        let bal = balanced_accuracy(&acc)?;
        Ok(Self {
            acc,
            bal,
            n: BTreeMap::new(),
        })
    }

    /// Scores per-sample correctness; every split must be represented.
    pub fn from_predictions(splits: &[SplitLabel], correct: &[bool]) -> Result<Self> {
        if splits.len() != correct.len() {
            return Err(Error::Shape(format!(
                "{} splits but {} correctness flags",
                splits.len(),
                correct.len()
            )));
        }
        let mut hits = [0usize; 4];
        let mut counts = [0usize; 4];
        for (s, &c) in splits.iter().zip(correct) {
            counts[s.index()] += 1;
            hits[s.index()] += usize::from(c);
        }
        let mut acc = BTreeMap::new();
        let mut n = BTreeMap::new();
        for s in SplitLabel::ALL {
            let i = s.index();
            if counts[i] == 0 {
                return Err(Error::MissingSplit(s.as_str().to_string()));
            }
            acc.insert(s.as_str().to_string(), 100.0 * hits[i] as f64 / counts[i] as f64);
            n.insert(s.as_str().to_string(), counts[i]);
        }
        let bal = balanced_accuracy(&acc)?;
        Ok(Self { acc, bal, n })
    }

    pub fn get(&self, split: SplitLabel) -> Result<f64> {
        self.acc
            .get(split.as_str())
            .copied()
            .ok_or_else(|| Error::MissingSplit(split.as_str().to_string()))
    }

    pub fn std_mean(&self) -> Result<f64> {
        Ok((self.get(SplitLabel::STD_V)? + self.get(SplitLabel::STD_A)?) / 2.0)
    }

    pub fn mis_mean(&self) -> Result<f64> {
        Ok((self.get(SplitLabel::MIS_V)? + self.get(SplitLabel::MIS_A)?) / 2.0)
    }

    /// Whether the stored balanced accuracy matches recomputation within 0.05.
    pub fn is_consistent(&self) -> bool {
        balanced_accuracy(&self.acc).is_ok_and(|b| (b - self.bal).abs() <= 0.05 + 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterferenceDirection {
    /// Audio interfering with vision: scored on mis_v.
    #[serde(rename = "A->V")]
    AudioToVision,
    /// Vision interfering with audio: scored on mis_a.
    #[serde(rename = "V->A")]
    VisionToAudio,
}

/// Single-modality minus audio-visual accuracy on the affected misleading split.
pub fn interference_delta(
    report_av: &SplitReport,
    report_single: &SplitReport,
    direction: InterferenceDirection,
) -> Result<f64> {
    let split = match direction {
        InterferenceDirection::AudioToVision => SplitLabel::MIS_V,
        InterferenceDirection::VisionToAudio => SplitLabel::MIS_A,
    };
    Ok(report_single.get(split)? - report_av.get(split)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRecord {
    pub pred_correct: bool,
    #[serde(default)]
    pub extraction_correct: bool,
    pub explanation_correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub n: usize,
    pub p_acc: f64,
    pub e_acc: f64,
    /// Right prediction, right explanation.
    pub r_plus_r: f64,
    /// Right prediction, wrong explanation.
    pub r_plus_w: f64,
}

pub fn judge_aggregate(records: &[JudgeRecord]) -> Result<JudgeReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput("judge records"));
    }
    let n = records.len() as f64;
    let pct = |f: &dyn Fn(&JudgeRecord) -> bool| 100.0 * records.iter().filter(|r| f(r)).count() as f64 / n;
    Ok(JudgeReport {
        n: records.len(),
        p_acc: pct(&|r| r.pred_correct),
        e_acc: pct(&|r| r.explanation_correct),
        r_plus_r: pct(&|r| r.pred_correct && r.explanation_correct),
        r_plus_w: pct(&|r| r.pred_correct && !r.explanation_correct),
    })
}

/// The last standalone option letter A-F in a model response: an uppercase
/// letter not adjacent to any other alphanumeric character, as in `(B)`,
/// `C.` or `Answer: D`.
pub fn parse_answer_letter(text: &str) -> Option<Letter> {
    let chars: Vec<char> = text.chars().collect();
    (0..chars.len()).rev().find_map(|i| {
        let c = chars[i];
        let isolated = |j: Option<usize>| j.and_then(|j| chars.get(j)).is_none_or(|n| !n.is_alphanumeric());
        if ('A'..='F').contains(&c) && isolated(i.checked_sub(1)) && isolated(Some(i + 1)) {
            Letter::from_index(c as usize - 'A' as usize)
        } else {
            None
        }
    })
}
