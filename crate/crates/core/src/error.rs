use std::path::PathBuf;

/// Errors produced by every analysis in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("too few groups: {groups} videos for k={k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("missing split: {0}")]
    MissingSplit(String),
    #[error("missing question text for sample {0}")]
    MissingText(String),
    #[error("model assets are required but not present")]
    MissingAssets,
    #[error("missing metadata for sample {0}")]
    MissingMeta(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("svd failed: {0}")]
    SvdFailure(String),
    #[error("shuffle count mismatch: {0}")]
    ShuffleCountMismatch(String),
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
