//! On-disk data model: manifest, hidden-state bundles, model assets and text
//! embeddings, plus validated loading.

pub mod assets;
pub mod bundle;
pub mod dataset;
pub mod embeddings;
pub mod manifest;
pub mod types;
pub mod validate;

pub use assets::{read_assets, write_assets, ModelAssets};
pub use bundle::{read_bundle, write_bundle, HiddenStateBundle};
pub use dataset::Dataset;
pub use embeddings::{read_embeddings, write_embeddings, TextEmbeddingTable};
pub use manifest::{load_manifest, parse_manifest, write_manifest};
pub use types::{
    Condition, Letter, Manifest, MisleadingSubcategory, Modality, QuestionType, SampleMeta,
    SplitLabel,
};
pub use validate::{validate_dataset, ValidationReport};
