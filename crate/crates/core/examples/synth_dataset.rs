//! Generate a synthetic dataset and inspect its planted ground truth.

use gapdiag::store::Modality;
use gapdiag::synth::{generate_synthetic, SynthConfig};

fn main() -> gapdiag::Result<()> {
    let cfg = SynthConfig {
        n_videos: 50,
        text_leak_strength: 0.5,
        behavioral_coupling: 0.3,
        seed: 42,
        ..SynthConfig::default()
    };
    let s = generate_synthetic(&cfg)?;
    let gt = &s.ground_truth;
    let uv = gt.direction(Modality::Vision);
    let ua = gt.direction(Modality::Audio);
    let dot: f64 = uv.iter().zip(ua).map(|(a, b)| a * b).sum();
    println!("{} samples, {} layers, d = {}", s.dataset.len(), s.dataset.n_layers(), s.dataset.d_hidden());
    println!("u_vision . u_audio = {dot:.2e}, W_leak is {}x{}", gt.w_leak_matrix().nrows(), gt.w_leak_matrix().ncols());
    let coupled = gt.samples.iter().filter(|d| d.coupled == Some(true)).count();
    println!("{coupled} misleading samples had their choice logits coupled to the planted signal");
    for (meta, b) in s.dataset.samples().iter().zip(&s.dataset.bundles).take(4) {
        println!("{:<14} {}  gold {}  logits {:?}", meta.sample_id, meta.split, meta.correct_letter, b.choice_logits);
    }
    let out = std::env::temp_dir().join("gapdiag-synth");
    println!("manifest: {}", s.write(&out)?.display());
    Ok(())
}
