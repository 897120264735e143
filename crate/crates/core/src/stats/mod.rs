//! Scoring and resampling statistics shared by every report.

pub mod bootstrap;
pub mod scoring;
pub mod shuffle;
pub mod temporal;

pub use bootstrap::{bootstrap_ci, paired_bootstrap_p, PValue, DEFAULT_RESAMPLES};
pub use scoring::{
    balanced_accuracy, balanced_from, interference_delta, judge_aggregate, parse_answer_letter,
    round1, InterferenceDirection, JudgeRecord, JudgeReport, SplitReport,
};
pub use shuffle::{consistency_analysis, shuffle_permutation, ConsistencyReport, Permutation6};
pub use temporal::{temporal_logit_diagnostic, temporal_stratify, DiagnosticReport, StratReport};
