//! Accuracy by clip duration and evidence position, and the logistic
//! diagnostic of correctness on sample properties.

use std::collections::BTreeMap;

use gapdiag::stats::{temporal_logit_diagnostic, temporal_stratify};
use gapdiag::synth::{generate_synthetic, SynthConfig};

fn main() -> gapdiag::Result<()> {
    let ds = generate_synthetic(&SynthConfig { n_videos: 200, d_hidden: 12, d_text: 4, ..SynthConfig::default() })?.dataset;
    let results: BTreeMap<String, bool> = ds
        .samples()
        .iter()
        .zip(&ds.bundles)
        .map(|(m, b)| {
            let l = b.logits_f64();
            let pick = (0..6).max_by(|&i, &j| l[i].total_cmp(&l[j])).unwrap();
            (m.sample_id.clone(), pick == m.correct_letter.index())
        })
        .collect();
    let strat = temporal_stratify(&results, ds.samples())?;
    for (split, cells) in &strat.by_duration {
        let row: Vec<String> = cells.iter().map(|c| c.acc.map_or("-".into(), |a| format!("{a:5.1} (n={})", c.n))).collect();
        println!("{split} by duration: {}", row.join("  "));
    }
    let diag = temporal_logit_diagnostic(&results, ds.samples(), 5, 0)?;
    println!("cv accuracy {:.1} +- {:.1} (majority {:.1})", diag.cv_accuracy, diag.cv_std, diag.majority_rate);
    for (f, c) in &diag.coefficients {
        println!("  {f:<15} {c:+.3}");
    }
    Ok(())
}
