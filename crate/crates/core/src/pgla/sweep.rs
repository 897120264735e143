//! Cross-validated grid tuning and budget-constrained selection.
//!
//! The evaluation set is split into video-grouped folds. For each fold, beta
//! is estimated on the standard samples of the other folds, every grid point
//! is scored on those folds by balanced accuracy, and the winner is applied to
//! the held-out fold. Every grid point is also applied to every held-out fold
//! with that fold's beta, which yields pooled per-configuration scores over
//! the whole evaluation set for budgeted selection.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use super::adjust::{apply_pgla, argmax6, estimate_beta, GridPoint, PglaConfig};
use super::MlpProbe;
use crate::error::{Error, Result};
use crate::folds::make_folds;
use crate::stats::SplitReport;
use crate::store::{Dataset, SampleMeta, SplitLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub n_tune: usize,
    pub n_test: usize,
    pub beta: f64,
    pub chosen_index: usize,
    pub chosen: PglaConfig,
    pub tune_bal: f64,
    pub test: SplitReport,
    pub baseline: SplitReport,
    pub delta_bal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub k: usize,
    pub seed: u64,
    pub grid: Vec<GridPoint>,
    pub sample_ids: Vec<String>,
    pub p_mis: Vec<f64>,
    pub folds: Vec<FoldOutcome>,
    pub mean_test_acc: BTreeMap<String, f64>,
    pub mean_test_bal: f64,
    pub mean_baseline_bal: f64,
    pub mean_delta_bal: f64,
    pub mean_tune_bal: f64,
    /// Mean tuning balanced accuracy minus mean test balanced accuracy.
    pub tune_test_gap: f64,
    /// Unadjusted scores pooled over the evaluation set.
    pub pooled_baseline: SplitReport,
    /// Per grid point, held-out scores pooled over all folds.
    pub per_config: Vec<SplitReport>,
    pub fold_betas: Vec<f64>,
}

struct Item<'a> {
    meta: &'a SampleMeta,
    logits: [f64; 6],
    p_mis: f64,
}

fn correct(item: &Item, cfg: &PglaConfig) -> bool {
    argmax6(&apply_pgla(&item.logits, item.p_mis, cfg)) == item.meta.correct_letter.index()
}

fn score(items: &[&Item], cfg: Option<&PglaConfig>) -> Result<SplitReport> {
    let splits: Vec<SplitLabel> = items.iter().map(|i| i.meta.split).collect();
    let hits: Vec<bool> = items
        .iter()
        .map(|i| match cfg {
            Some(c) => correct(i, c),
            None => argmax6(&i.logits) == i.meta.correct_letter.index(),
        })
        .collect();
    SplitReport::from_predictions(&splits, &hits)
}

/// Gentlest-first order among equal balanced accuracy: smaller delta, then
/// smaller s, then smaller gamma, then grid order.
fn gentler(grid: &[GridPoint], a: usize, b: usize) -> Ordering {
    let (x, y) = (&grid[a], &grid[b]);
    x.delta
        .total_cmp(&y.delta)
        .then(x.s.total_cmp(&y.s))
        .then(x.gamma.total_cmp(&y.gamma))
        .then(a.cmp(&b))
}

fn select_best(grid: &[GridPoint], bals: &[f64]) -> usize {
    (0..grid.len())
        .min_by(|&a, &b| bals[b].total_cmp(&bals[a]).then(gentler(grid, a, b)))
        .unwrap()
}

/// Sweep with the probe's scores on its evaluation videos.
pub fn grid_sweep_cv(
    dataset: &Dataset,
    probe: &MlpProbe,
    grid: &[GridPoint],
    k: usize,
    seed: u64,
) -> Result<SweepResult> {
    let eval = probe.eval_indices(dataset);
    let p = probe.p_mis(dataset, &eval);
    grid_sweep_scores(dataset, &eval, &p, grid, k, seed)
}

/// Sweep over `indices` given externally computed misleading probabilities.
pub fn grid_sweep_scores(
    dataset: &Dataset,
    indices: &[usize],
    p_mis: &[f64],
    grid: &[GridPoint],
    k: usize,
    seed: u64,
) -> Result<SweepResult> {
    if indices.len() != p_mis.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} probe scores",
            indices.len(),
            p_mis.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput("grid"));
    }
    if let Some(p) = p_mis.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("probe score {p} outside [0, 1]")));
    }
    let samples = dataset.samples();
    let items: Vec<Item> = indices
        .iter()
        .zip(p_mis)
        .map(|(&i, &p)| Item {
            meta: &samples[i],
            logits: dataset.bundles[i].logits_f64(),
            p_mis: p,
        })
        .collect();
    let metas: Vec<SampleMeta> = items.iter().map(|i| i.meta.clone()).collect();
    let folds = make_folds(&metas, k, seed)?;
    let fold_of: Vec<usize> = metas.iter().map(|m| folds.fold(&m.video_id).unwrap()).collect();

    // held[c][j]: correctness of item j under grid point c with its fold's beta.
    let mut held = vec![vec![false; items.len()]; grid.len()];
    let mut outcomes = Vec::with_capacity(k);
    let mut fold_betas = Vec::with_capacity(k);
    for fold in 0..k {
        let tune: Vec<&Item> = items.iter().zip(&fold_of).filter(|(_, &f)| f != fold).map(|(i, _)| i).collect();
        let test_idx: Vec<usize> = (0..items.len()).filter(|&j| fold_of[j] == fold).collect();
        let test: Vec<&Item> = test_idx.iter().map(|&j| &items[j]).collect();
        let std_logits: Vec<[f64; 6]> = tune
            .iter()
            .filter(|i| !i.meta.split.is_misleading())
            .map(|i| i.logits)
            .collect();
        let beta = estimate_beta(&std_logits)?;
        fold_betas.push(beta);
        let tune_bals: Vec<f64> = grid
            .par_iter()
            .map(|g| score(&tune, Some(&g.with_beta(beta))).map(|r| r.bal))
            .collect::<Result<_>>()?;
        let chosen_index = select_best(grid, &tune_bals);
        let chosen = grid[chosen_index].with_beta(beta);
        let test_report = score(&test, Some(&chosen))?;
        let baseline = score(&test, None)?;
        let per_config_hits: Vec<Vec<bool>> = grid
            .par_iter()
            .map(|g| {
                let cfg = g.with_beta(beta);
                test.iter().map(|i| correct(i, &cfg)).collect()
            })
            .collect();
        for (c, hits) in per_config_hits.into_iter().enumerate() {
            for (&j, h) in test_idx.iter().zip(hits) {
                held[c][j] = h;
            }
        }
        outcomes.push(FoldOutcome {
            fold,
            n_tune: tune.len(),
            n_test: test.len(),
            beta,
            chosen_index,
            chosen,
            tune_bal: tune_bals[chosen_index],
            delta_bal: test_report.bal - baseline.bal,
            test: test_report,
            baseline,
        });
    }

    let kf = outcomes.len() as f64;
    let mean = |f: &dyn Fn(&FoldOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / kf;
    let mean_test_acc = SplitLabel::ALL
        .iter()
        .map(|s| (s.as_str().to_string(), mean(&|o| o.test.acc[s.as_str()])))
        .collect();
    let splits: Vec<SplitLabel> = items.iter().map(|i| i.meta.split).collect();
    let per_config = held
        .iter()
        .map(|h| SplitReport::from_predictions(&splits, h))
        .collect::<Result<_>>()?;
    let all: Vec<&Item> = items.iter().collect();
    let mean_tune_bal = mean(&|o| o.tune_bal);
    let mean_test_bal = mean(&|o| o.test.bal);
    Ok(SweepResult {
        k,
        seed,
        grid: grid.to_vec(),
        sample_ids: metas.iter().map(|m| m.sample_id.clone()).collect(),
        p_mis: p_mis.to_vec(),
        mean_test_acc,
        mean_test_bal,
        mean_baseline_bal: mean(&|o| o.baseline.bal),
        mean_delta_bal: mean(&|o| o.delta_bal),
        mean_tune_bal,
        tune_test_gap: mean_tune_bal - mean_test_bal,
        pooled_baseline: score(&all, None)?,
        per_config,
        fold_betas,
        folds: outcomes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Maximum standard-accuracy loss in percentage points.
    Pp(f64),
    Unconstrained,
}

impl Budget {
    fn limit(self) -> f64 {
        match self {
            Budget::Pp(b) => b,
            Budget::Unconstrained => f64::INFINITY,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Pp(b) => write!(f, "<={b}pp"),
            Budget::Unconstrained => f.write_str("unconstrained"),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "unconstrained" | "none" => Ok(Budget::Unconstrained),
            t => match t.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Ok(Budget::Pp(v)),
                _ => Err(Error::Usage(format!("bad budget {t:?}"))),
            },
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Budget::Pp(b) => s.serialize_f64(*b),
            Budget::Unconstrained => s.serialize_str("unconstrained"),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => Ok(Budget::Pp(n.as_f64().unwrap_or(f64::NAN))),
            serde_json::Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom("budget must be a number or a string")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub budget: Budget,
    /// `None` selects the unadjusted logits. The beta shown is the mean of the
    /// per-fold estimates; each fold used its own.
    pub config: Option<PglaConfig>,
    pub grid_index: Option<usize>,
    pub std_acc: f64,
    pub mis_acc: f64,
    pub bal_acc: f64,
    pub delta_bal: f64,
    pub std_loss: f64,
}

/// Per budget, the candidate with the highest pooled balanced accuracy whose
/// standard-accuracy loss stays within the budget. The unadjusted logits are
/// always a candidate, so every budget is feasible and selections are
/// monotone in the budget.
pub fn pareto_curve(sweep: &SweepResult, budgets: &[Budget]) -> Result<Vec<ParetoPoint>> {
    let base = &sweep.pooled_baseline;
    let base_std = base.std_mean()?;
    let mean_beta = sweep.fold_betas.iter().sum::<f64>() / sweep.fold_betas.len().max(1) as f64;
    let mut out = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        if let Budget::Pp(b) = budget {
            if !(b >= 0.0) {
                return Err(Error::Config(format!("negative budget {b}")));
            }
        }
        let limit = budget.limit();
        let mut best: Option<usize> = None;
        let mut best_bal = base.bal;
        for (c, r) in sweep.per_config.iter().enumerate() {
            if base_std - r.std_mean()? > limit + 1e-9 {
                continue;
            }
            let better = match best {
                _ if r.bal > best_bal => true,
                Some(b) if r.bal == best_bal => gentler(&sweep.grid, c, b) == Ordering::Less,
                _ => false,
            };
            if better {
                best = Some(c);
                best_bal = r.bal;
            }
        }
        let report = best.map_or(base, |c| &sweep.per_config[c]);
        out.push(ParetoPoint {
            budget,
            config: best.map(|c| sweep.grid[c].with_beta(mean_beta)),
            grid_index: best,
            std_acc: report.std_mean()?,
            mis_acc: report.mis_mean()?,
            bal_acc: report.bal,
            delta_bal: report.bal - base.bal,
            std_loss: base_std - report.std_mean()?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgla::{default_grid, misleading_labels};
    use crate::synth::{generate_synthetic, SynthConfig};

    fn report(std: f64, mis: f64) -> SplitReport {
        SplitReport::from_accuracies(
            [("std_v", std), ("std_a", std), ("mis_v", mis), ("mis_a", mis)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        )
        .unwrap()
    }

    fn toy_sweep(configs: Vec<SplitReport>) -> SweepResult {
        let grid = default_grid()[..configs.len()].to_vec();
        SweepResult {
            k: 5,
            seed: 0,
            grid,
            sample_ids: vec![],
            p_mis: vec![],
            folds: vec![],
            mean_test_acc: BTreeMap::new(),
            mean_test_bal: 0.0,
            mean_baseline_bal: 0.0,
            mean_delta_bal: 0.0,
            mean_tune_bal: 0.0,
            tune_test_gap: 0.0,
            pooled_baseline: report(90.0, 0.0),
            per_config: configs,
            fold_betas: vec![0.0],
        }
    }

    #[test]
    fn budget_filter_and_identity_fallback() {
        // Bal 50 at 1pp loss vs bal 55 at 5pp loss (baseline bal 45).
        let sweep = toy_sweep(vec![report(89.0, 11.0), report(85.0, 25.0)]);
        let pts = pareto_curve(&sweep, &[Budget::Pp(0.5), Budget::Pp(2.0), Budget::Unconstrained]).unwrap();
        assert_eq!(pts[0].grid_index, None);
        assert_eq!(pts[0].delta_bal, 0.0);
        assert_eq!(pts[1].grid_index, Some(0));
        assert_eq!(pts[1].bal_acc, 50.0);
        assert_eq!(pts[2].grid_index, Some(1));
        assert!(pts.windows(2).all(|w| w[1].delta_bal >= w[0].delta_bal));
    }

    #[test]
    fn budget_parsing() {
        assert_eq!("3".parse::<Budget>().unwrap(), Budget::Pp(3.0));
        assert_eq!("inf".parse::<Budget>().unwrap(), Budget::Unconstrained);
        assert!("-1".parse::<Budget>().is_err());
    }

    #[test]
    fn perfect_probe_recovers_rejections() {
        let s = generate_synthetic(&SynthConfig {
            n_videos: 60,
            n_layers: 2,
            d_hidden: 8,
            d_text: 2,
            signal_layers: vec![1],
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let idx: Vec<usize> = (0..s.dataset.len()).collect();
        let p: Vec<f64> = misleading_labels(&s.dataset, &idx)
            .iter()
            .map(|&m| if m { 1.0 } else { 0.0 })
            .collect();
        let sweep = grid_sweep_scores(&s.dataset, &idx, &p, &default_grid(), 5, 1).unwrap();
        assert!(sweep.mean_delta_bal > 10.0, "{}", sweep.mean_delta_bal);
        assert_eq!(sweep.per_config.len(), 162);
        let again = grid_sweep_scores(&s.dataset, &idx, &p, &default_grid(), 5, 1).unwrap();
        assert_eq!(sweep, again);
    }
}
