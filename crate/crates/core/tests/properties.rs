use std::collections::BTreeMap;

use gapdiag::folds::make_folds;
use gapdiag::pgla::{apply_pgla, train_mlp_probe, PglaConfig};
use gapdiag::probe::{probe_layer, train_linear_probe, NegativePolicy, ProbeTask};
use gapdiag::residual::{null_space_projector, RidgeMap};
use gapdiag::stats::{
    bootstrap_ci, judge_aggregate, round1, shuffle_permutation, temporal_stratify, JudgeRecord, SplitReport,
};
use gapdiag::store::{Letter, Modality, SplitLabel};
use gapdiag::synth::{generate_synthetic, SynthConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn cfg(strength: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        vision_signal_strength: strength,
        audio_signal_strength: strength,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn planted_direction_is_recovered() {
    for seed in [0, 1] {
        let s = generate_synthetic(&cfg(5.0, seed)).unwrap();
        let ds = &s.dataset;
        let layer = s.ground_truth.config.signal_layers[0];
        let (idx, y) = ProbeTask::vision(NegativePolicy::WithinModality).select(ds.samples()).unwrap();
        let probe = train_linear_probe(&ds.layer_matrix(layer, &idx), &y, 1.0).unwrap();
        let w = DVector::from_vec(probe.raw_direction());
        let u = DVector::from_column_slice(s.ground_truth.direction(Modality::Vision));
        let cos = w.dot(&u).abs() / (w.norm() * u.norm());
        assert!(cos >= 0.9, "seed {seed}: |cos| = {cos:.3}");
    }
}

#[test]
fn accuracy_is_monotone_in_signal_strength() {
    let task = ProbeTask::vision(NegativePolicy::WithinModality);
    let accs: Vec<f64> = [0.5, 2.0, 5.0]
        .iter()
        .map(|&st| {
            let ds = generate_synthetic(&cfg(st, 3)).unwrap().dataset;
            let folds = make_folds(ds.samples(), 4, 0).unwrap();
            probe_layer(&ds, task, 4, &folds, 1.0).unwrap().accuracy()
        })
        .collect();
    assert!(accs.windows(2).all(|w| w[1] >= w[0] - 0.02), "{accs:?}");
}

#[test]
fn synth_output_is_byte_identical() {
    let c = SynthConfig { n_videos: 12, text_leak_strength: 0.3, behavioral_coupling: 0.4, ..cfg(5.0, 9) };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        generate_synthetic(&c).unwrap().write(d.path()).unwrap();
    }
    let files = |root: &std::path::Path| {
        let mut out = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(p) = stack.pop() {
            for e in std::fs::read_dir(&p).unwrap() {
                let e = e.unwrap().path();
                if e.is_dir() {
                    stack.push(e);
                } else {
                    out.insert(e.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&e).unwrap());
                }
            }
        }
        out
    };
    let (a, b) = (files(dirs[0].path()), files(dirs[1].path()));
    assert_eq!(a.len(), 12 * 4 + 4);
    assert_eq!(a, b);
}

#[test]
fn probe_training_videos_never_reach_evaluation() {
    let ds = generate_synthetic(&SynthConfig { n_videos: 40, ..cfg(5.0, 2) }).unwrap().dataset;
    let probe = train_mlp_probe(&ds, 4, 0.25, 5).unwrap();
    assert!(probe.train_videos.is_disjoint(&probe.eval_videos));
    for i in probe.eval_indices(&ds) {
        assert!(!probe.train_videos.contains(&ds.samples()[i].video_id));
    }
    assert_eq!(probe.train_indices(&ds).len() + probe.eval_indices(&ds).len(), ds.len());
}

fn pgla_cfg() -> impl Strategy<Value = PglaConfig> {
    (0.1f64..5.0, 0.5f64..3.0, 0.05f64..=1.0, 0.1f64..2.0, 0.1f64..15.0, -3.0f64..3.0).prop_map(
        |(gamma, p, alpha_thresh, s, delta, beta)| PglaConfig { gamma, p, alpha_thresh, s, delta, beta },
    )
}

fn split_strategy() -> impl Strategy<Value = SplitLabel> {
    prop::sample::select(SplitLabel::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pgla_content_untouched_and_debias_antisymmetric(
        logits in prop::array::uniform6(-20f64..20.0),
        p_mis in 0f64..=1.0,
        cfg in pgla_cfg(),
    ) {
        let out = apply_pgla(&logits, p_mis, &cfg);
        for j in 0..4 {
            prop_assert_eq!(out[j].to_bits(), logits[j].to_bits());
        }
        let flipped = apply_pgla(&logits, p_mis, &PglaConfig { beta: -cfg.beta, ..cfg });
        prop_assert!((out[4] + out[5] - flipped[4] - flipped[5]).abs() <= 1e-9 * (1.0 + out[4].abs() + out[5].abs()));
        prop_assert!((out[4] - flipped[5] - (logits[4] - logits[5])).abs() <= 1e-9 * (1.0 + out[4].abs()));
    }

    #[test]
    fn gate_is_monotone_in_p_mis(
        logits in prop::array::uniform6(-20f64..20.0),
        a in 0f64..=1.0,
        b in 0f64..=1.0,
        cfg in pgla_cfg(),
    ) {
        let cfg = PglaConfig { beta: 0.0, ..cfg };
        // Boost sign follows s * gap + delta; monotone non-decreasing when it is non-negative.
        prop_assume!(cfg.s * gapdiag::pgla::adjust::logit_gap(&logits) + cfg.delta >= 0.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(apply_pgla(&logits, hi, &cfg)[4] >= apply_pgla(&logits, lo, &cfg)[4]);
    }

    #[test]
    fn projector_is_idempotent(
        rows in 1usize..5,
        entries in prop::collection::vec(-3f64..3.0, 5 * 12),
        h in prop::collection::vec(-10f64..10.0, 12),
    ) {
        let w = DMatrix::from_row_slice(rows, 12, &entries[..rows * 12]);
        let proj = null_space_projector(&RidgeMap { w: w.clone(), alpha: 1.0 }, 1e-5).unwrap();
        let once = proj.apply(&h);
        let twice = proj.apply(&once);
        let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let diff = once.iter().zip(&twice).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-9 * norm);
        let s_max = proj.singular_values.iter().copied().fold(0.0, f64::max);
        prop_assert!((&w * DVector::from_vec(once)).norm() <= 1e-5 * s_max * norm * (1.0 + 1e-6) + 1e-12);
    }

    #[test]
    fn judge_identity(records in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let recs: Vec<JudgeRecord> = records
            .iter()
            .map(|&(p, e)| JudgeRecord { pred_correct: p, extraction_correct: p, explanation_correct: e && p })
            .collect();
        let r = judge_aggregate(&recs).unwrap();
        prop_assert!((r.e_acc - r.r_plus_r).abs() < 1e-9);
        prop_assert!((r.p_acc - r.r_plus_r - r.r_plus_w).abs() < 1e-9);
    }

    #[test]
    fn reports_satisfy_balanced_recomputation(
        rows in prop::collection::vec((split_strategy(), any::<bool>()), 1..200),
    ) {
        let mut rows = rows;
        rows.extend(SplitLabel::ALL.iter().map(|&s| (s, true)));
        let splits: Vec<SplitLabel> = rows.iter().map(|r| r.0).collect();
        let hits: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let rep = SplitReport::from_predictions(&splits, &hits).unwrap();
        prop_assert!(rep.is_consistent());
        let printed = round1(rep.bal);
        let recomputed = (rep.std_mean().unwrap() + rep.mis_mean().unwrap()) / 2.0;
        prop_assert!((printed - recomputed).abs() <= 0.05 + 1e-9);
    }

    #[test]
    fn stratification_partitions_samples(
        durations in prop::collection::vec((60f64..=300.0, 0f64..1.0, any::<bool>()), 4..40),
    ) {
        let base = generate_synthetic(&SynthConfig { n_videos: 10, ..cfg(5.0, 1) }).unwrap().dataset;
        let mut meta = base.samples()[..durations.len()].to_vec();
        let mut results = BTreeMap::new();
        for (m, &(d, frac, ok)) in meta.iter_mut().zip(&durations) {
            m.duration_s = d;
            m.answer_ts_start_s = frac * d;
            m.answer_ts_end_s = (frac * d + 1.0).min(d);
            results.insert(m.sample_id.clone(), ok);
        }
        let rep = temporal_stratify(&results, &meta).unwrap();
        let total = |cells: &BTreeMap<String, Vec<gapdiag::stats::temporal::Cell>>| {
            cells.values().flatten().map(|c| c.n).sum::<usize>()
        };
        prop_assert_eq!(total(&rep.by_duration), meta.len());
        prop_assert_eq!(total(&rep.by_position), meta.len());
    }

    #[test]
    fn shuffle_inverse_round_trips(video in "[a-z0-9]{1,12}", gold in 0usize..6, k in 0u64..10) {
        let gold = Letter::from_index(gold).unwrap().to_string();
        let p = shuffle_permutation(&video, &gold, k);
        prop_assert_eq!(&p, &shuffle_permutation(&video, &gold, k));
        for x in Letter::ALL {
            prop_assert_eq!(p.invert(p.apply(x)), x);
        }
    }
}

#[test]
fn bootstrap_is_seed_deterministic() {
    let xs: Vec<bool> = (0..300).map(|i| i % 3 != 0).collect();
    assert_eq!(bootstrap_ci(&xs, 2000, 0.95, 7).unwrap(), bootstrap_ci(&xs, 2000, 0.95, 7).unwrap());
    assert_ne!(bootstrap_ci(&xs, 2000, 0.95, 7).unwrap(), bootstrap_ci(&xs, 2000, 0.95, 8).unwrap());
}
