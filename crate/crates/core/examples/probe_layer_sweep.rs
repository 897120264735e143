//! Per-layer probe sweep for all three tasks, plus a label-shuffled control.

use gapdiag::folds::make_folds;
use gapdiag::probe::{layer_sweep, NegativePolicy, ProbeTask};
use gapdiag::synth::{generate_label_shuffled, generate_synthetic, SynthConfig};

fn main() -> gapdiag::Result<()> {
    let cfg = SynthConfig { signal_layers: vec![3, 4], ..SynthConfig::default() };
    let ds = generate_synthetic(&cfg)?.dataset;
    let folds = make_folds(ds.samples(), 4, 0)?;
    let tasks = [
        ProbeTask::Binary,
        ProbeTask::vision(NegativePolicy::WithinModality),
        ProbeTask::audio(NegativePolicy::AllStandard1to2),
    ];
    for task in tasks {
        let s = layer_sweep(&ds, task, &folds, 1.0)?;
        let accs: Vec<String> = s.per_layer_cv_acc.iter().map(|a| format!("{:.0}", 100.0 * a)).collect();
        println!("{:<28} l* = {}  peak {:.1}  decay {:+.1}  [{}]", task.to_string(), s.peak_layer, 100.0 * s.peak_acc, 100.0 * s.decay(), accs.join(" "));
    }
    let control = generate_label_shuffled(&ds, 1);
    let s = layer_sweep(&control, tasks[1], &folds, 1.0)?;
    println!("label-shuffled control: peak {:.1} at layer {}", 100.0 * s.peak_acc, s.peak_layer);
    Ok(())
}
