//! Bootstrap confidence intervals and a paired bootstrap test.

use gapdiag::rng::SplitMix64;
use gapdiag::stats::{bootstrap_ci, paired_bootstrap_p, DEFAULT_RESAMPLES};
use rand::Rng;

fn main() -> gapdiag::Result<()> {
    let mut rng = SplitMix64::new(5);
    let before: Vec<bool> = (0..500).map(|_| rng.random_bool(0.40)).collect();
    let after: Vec<bool> = before.iter().map(|&b| b || rng.random_bool(0.2)).collect();
    for (name, xs) in [("before", &before), ("after", &after)] {
        let (lo, hi) = bootstrap_ci(xs, DEFAULT_RESAMPLES, 0.95, 1)?;
        let acc = 100.0 * xs.iter().filter(|&&c| c).count() as f64 / xs.len() as f64;
        println!("{name:<6} {acc:.1}% [{lo:.1}, {hi:.1}]");
    }
    let diffs: Vec<f64> = before.iter().zip(&after).map(|(&b, &a)| f64::from(u8::from(a)) - f64::from(u8::from(b))).collect();
    let p = paired_bootstrap_p(&diffs, DEFAULT_RESAMPLES, 2)?;
    println!("paired p = {}", serde_json::to_string(&p).unwrap_or_default());
    let noise: Vec<f64> = (0..500).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    println!("symmetric diffs p = {}", serde_json::to_string(&paired_bootstrap_p(&noise, DEFAULT_RESAMPLES, 3)?).unwrap_or_default());
    Ok(())
}
