//! Diagnostics for the gap between what a model's hidden states encode about
//! misleading inputs and what its answers show, plus a probe-guided logit
//! adjustment that closes part of that gap.

pub mod cli;
pub mod error;
pub mod folds;
pub mod lens;
pub mod logistic;
pub mod optim;
pub mod pgla;
pub mod probe;
pub mod report;
pub mod rng;
pub mod stats;
pub mod store;
pub mod residual;
pub mod synth;
pub mod tfidf;

pub use error::{Error, Result};
