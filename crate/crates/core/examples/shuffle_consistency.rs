//! Deterministic option shuffles and never/always/sometimes consistency for a
//! model that always picks the first displayed option.

use gapdiag::stats::{consistency_analysis, shuffle_permutation};
use gapdiag::store::Letter;
use gapdiag::synth::{generate_synthetic, SynthConfig};

fn main() -> gapdiag::Result<()> {
    let ds = generate_synthetic(&SynthConfig { n_videos: 300, d_hidden: 12, d_text: 4, ..SynthConfig::default() })?.dataset;
    let samples = ds.samples();
    let p = shuffle_permutation("v0001", "E", 2);
    println!("v0001/E/2 displays {}", p.displayed.iter().map(|l| l.as_char()).collect::<String>());

    let k = 3;
    let preds: Vec<Vec<Option<Letter>>> = (0..k)
        .map(|s| {
            samples
                .iter()
                .map(|m| Some(shuffle_permutation(&m.video_id, &m.correct_letter.to_string(), s).invert(Letter::A)))
                .collect()
        })
        .collect();
    let gold: Vec<Letter> = samples.iter().map(|m| m.correct_letter).collect();
    let splits: Vec<_> = samples.iter().map(|m| m.split).collect();
    let r = consistency_analysis(&preds, &gold, &splits)?;
    println!(
        "never {:.1}%  sometimes {:.1}%  always {:.1}%  (uniform chance for never: {:.1}%)",
        r.overall.never_pct,
        r.overall.sometimes_pct,
        r.overall.always_pct,
        100.0 * (5.0f64 / 6.0).powi(k as i32)
    );
    Ok(())
}
