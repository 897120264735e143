//! Logit-lens trajectory of the correct-answer token across layers.

use gapdiag::lens::lens_trajectory;
use gapdiag::synth::{generate_synthetic, SynthConfig};

fn main() -> gapdiag::Result<()> {
    let ds = generate_synthetic(&SynthConfig { n_videos: 40, ..SynthConfig::default() })?.dataset;
    let t = lens_trajectory(&ds, None)?;
    for (split, means) in &t.mean_by_split {
        let row: Vec<String> = means.iter().map(|p| format!("{p:.3}")).collect();
        println!("{split}: {}", row.join(" "));
    }
    for (split, peak) in &t.per_split_peak {
        println!("{split} peaks at layer {} ({:.3})", peak.layer, peak.prob);
    }
    println!("regime {:?}, max |sum(p) - 1| = {:.1e}", t.regime, t.max_normalization_error);
    Ok(())
}
