//! Write a hidden-state bundle, read it back, and validate a small dataset.

use gapdiag::store::{load_manifest, read_bundle, validate_dataset, write_bundle, HiddenStateBundle};
use gapdiag::synth::{generate_synthetic, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("gapdiag-bundle-io");
    std::fs::create_dir_all(&dir)?;

    let states: Vec<f32> = (0..3 * 4).map(|i| i as f32 * 0.5).collect();
    let bundle = HiddenStateBundle::new(3, 4, states, [2.0, 0.1, -0.3, 0.0, -1.0, -1.2])?;
    let path = dir.join("one.bin");
    write_bundle(&path, &bundle)?;
    let back = read_bundle(&path, Some((3, 4)))?;
    println!("{} bytes, layer 2 = {:?}, logits = {:?}", bundle.encode().len(), back.layer(2), back.choice_logits);

    let cfg = SynthConfig { n_videos: 5, ..SynthConfig::default() };
    let manifest_path = generate_synthetic(&cfg)?.write(&dir.join("ds"))?;
    let report = validate_dataset(&load_manifest(&manifest_path)?);
    println!("{} samples, shape {:?}, {} violations", report.n_samples, report.bundle_shape, report.n_failures());
    for (check, c) in &report.checks {
        println!("  {check:<18} passed {:>3}  failed {}", c.passed, c.failed);
    }
    Ok(())
}
