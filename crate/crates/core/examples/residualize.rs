//! Remove what a linear map from text embeddings can explain, then re-probe.

use gapdiag::folds::make_folds;
use gapdiag::probe::{NegativePolicy, ProbeTask};
use gapdiag::residual::{residualized_probe_cv, text_baseline_probe, ResidualOptions, TextFeatures};
use gapdiag::synth::{generate_synthetic, SynthConfig};

fn main() -> gapdiag::Result<()> {
    let task = ProbeTask::vision(NegativePolicy::WithinModality);
    for leak in [0.0, 0.5, 1.0] {
        let ds = generate_synthetic(&SynthConfig { text_leak_strength: leak, ..SynthConfig::default() })?.dataset;
        let folds = make_folds(ds.samples(), 4, 0)?;
        let emb = ds.embeddings.as_ref().expect("synthetic data carries embeddings");
        let r = residualized_probe_cv(&ds, emb, task, 4, &folds, ResidualOptions::default())?;
        let tfidf = text_baseline_probe(TextFeatures::Tfidf, &ds, task, &folds, 1.0)?;
        let ext = text_baseline_probe(TextFeatures::ExternalEmbeddings, &ds, task, &folds, 1.0)?;
        println!(
            "leak {leak:.1}: original {:.1}  residualized {:.1}  tf-idf {:.1}  embeddings {:.1}",
            100.0 * r.original.accuracy,
            100.0 * r.residualized.accuracy,
            100.0 * tfidf.cv.accuracy,
            100.0 * ext.cv.accuracy
        );
    }
    Ok(())
}
