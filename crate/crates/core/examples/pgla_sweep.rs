//! Probe-guided logit adjustment on a synthetic model that under-rejects.
//!
//! cargo run --release --example pgla_sweep

use gapdiag::pgla::{default_grid, grid_sweep_cv, pareto_curve, train_mlp_probe, Budget};
use gapdiag::synth::{generate_synthetic, SynthConfig};

fn main() -> gapdiag::Result<()> {
    let synth = generate_synthetic(&SynthConfig {
        n_videos: 400,
        n_layers: 8,
        d_hidden: 32,
        d_text: 8,
        signal_layers: vec![4],
        vision_signal_strength: 5.0,
        audio_signal_strength: 5.0,
        behavioral_coupling: 0.0,
        seed: 7,
        ..Default::default()
    })?;
    let ds = &synth.dataset;
    let probe = train_mlp_probe(ds, 4, 0.25, 1)?;
    let sweep = grid_sweep_cv(ds, &probe, &default_grid(), 5, 1)?;
    for f in &sweep.folds {
        println!(
            "fold {}: beta {:+.3}  tune {:.1}  test {:.1}  baseline {:.1}  dBal {:+.1}",
            f.fold, f.beta, f.tune_bal, f.test.bal, f.baseline.bal, f.delta_bal
        );
    }
    println!(
        "mean dBal {:+.1}pp, tune-test gap {:+.2}pp",
        sweep.mean_delta_bal, sweep.tune_test_gap
    );
    let budgets = ["1", "2", "3", "10", "inf"].map(|b| b.parse::<Budget>().unwrap());
    for p in pareto_curve(&sweep, &budgets)? {
        println!(
            "{:>14}: std {:.1}  mis {:.1}  bal {:.1}  dBal {:+.1}",
            p.budget.to_string(),
            p.std_acc,
            p.mis_acc,
            p.bal_acc,
            p.delta_bal
        );
    }
    Ok(())
}
