//! Grouped, stratified fold assignment.
//!
//! Folds are assigned per group (video), never per sample, so all four
//! question variants of a video land in the same fold. A video's stratum is
//! the multiset of split labels it carries. Strata are processed largest
//! first; inside a stratum, videos are shuffled with the run seed and each one
//! goes to the fold holding the fewest videos of that stratum (then fewest
//! videos overall, then lowest index). This keeps every stratum balanced to
//! within one video per fold.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{shuffle, SplitMix64};
use crate::store::SampleMeta;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold(&self, video_id: &str) -> Option<usize> {
        self.fold_of.get(video_id).copied()
    }

    /// Splits `subset` (indices into `samples`) into (train, test) for `fold`.
    /// Samples whose video is unassigned are dropped.
    pub fn split(&self, samples: &[SampleMeta], subset: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for &i in subset {
            match self.fold(&samples[i].video_id) {
                Some(f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => {}
            }
        }
        (train, test)
    }

    pub fn videos_in(&self, fold: usize) -> BTreeSet<&str> {
        self.fold_of
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(v, _)| v.as_str())
            .collect()
    }
}

/// Assigns `groups` (group id -> stratum key) to `k` folds.
pub fn make_group_folds(groups: &BTreeMap<String, String>, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {k}")));
    }
    if groups.len() < k {
        return Err(Error::TooFewGroups {
            groups: groups.len(),
            k,
        });
    }
    let mut strata: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (g, s) in groups {
        strata.entry(s.as_str()).or_default().push(g.as_str());
    }
    let mut order: Vec<(&str, Vec<&str>)> = strata.into_iter().collect();
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));

    let mut total = vec![0usize; k];
    let mut fold_of = BTreeMap::new();
    for (rank, (_, mut members)) in order.into_iter().enumerate() {
        let mut rng = SplitMix64::keyed(seed, &[0xF01D, rank as u64]);
        shuffle(&mut members, &mut rng);
        let mut in_stratum = vec![0usize; k];
        for g in members {
            let f = (0..k)
                .min_by_key(|&f| (in_stratum[f], total[f], f))
                .expect("k >= 2");
            in_stratum[f] += 1;
            total[f] += 1;
            fold_of.insert(g.to_string(), f);
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

/// Stratum key of every video: its sorted split labels joined by `,`.
pub fn video_strata<'a>(samples: impl IntoIterator<Item = &'a SampleMeta>) -> BTreeMap<String, String> {
    let mut splits: BTreeMap<String, Vec<&'static str>> = BTreeMap::new();
    for s in samples {
        splits.entry(s.video_id.clone()).or_default().push(s.split.as_str());
    }
    splits
        .into_iter()
        .map(|(v, mut labels)| {
            labels.sort_unstable();
            (v, labels.join(","))
        })
        .collect()
}

/// Grouped stratified k-fold over the videos of `samples`.
pub fn make_folds(samples: &[SampleMeta], k: usize, seed: u64) -> Result<FoldAssignment> {
    make_group_folds(&video_strata(samples), k, seed)
}

/// Video-grouped, stratum-stratified holdout: returns (train, eval) video
/// sets with `round(fraction * |stratum|)` videos of each stratum in train.
pub fn holdout_videos(
    samples: &[SampleMeta],
    fraction: f64,
    seed: u64,
) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("holdout fraction {fraction} not in (0, 1)")));
    }
    let mut strata: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (v, s) in video_strata(samples) {
        strata.entry(s).or_default().push(v);
    }
    let mut train = BTreeSet::new();
    let mut eval = BTreeSet::new();
    for (rank, (_, mut members)) in strata.into_iter().enumerate() {
        let mut rng = SplitMix64::keyed(seed, &[0x4011, rank as u64]);
        shuffle(&mut members, &mut rng);
        let n_train = (fraction * members.len() as f64).round() as usize;
        for (i, v) in members.into_iter().enumerate() {
            if i < n_train {
                train.insert(v);
            } else {
                eval.insert(v);
            }
        }
    }
    if train.is_empty() || eval.is_empty() {
        return Err(Error::TooFewGroups {
            groups: train.len() + eval.len(),
            k: 2,
        });
    }
    Ok((train, eval))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(n: usize) -> BTreeMap<String, String> {
        (0..n).map(|i| (format!("v{i:03}"), "all".to_string())).collect()
    }

    #[test]
    fn full_scale_fold_sizes() {
        let f = make_group_folds(&groups(500), 4, 0).unwrap();
        for fold in 0..4 {
            assert_eq!(f.videos_in(fold).len(), 125);
        }
    }

    #[test]
    fn one_video_per_fold() {
        let f = make_group_folds(&groups(4), 4, 9).unwrap();
        for fold in 0..4 {
            assert_eq!(f.videos_in(fold).len(), 1);
        }
    }

    #[test]
    fn too_few_groups() {
        assert!(matches!(
            make_group_folds(&groups(3), 4, 0),
            Err(Error::TooFewGroups { groups: 3, k: 4 })
        ));
        assert!(matches!(make_group_folds(&groups(3), 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn strata_balanced_within_one() {
        let mut g = BTreeMap::new();
        for i in 0..37 {
            g.insert(format!("a{i}"), "x".to_string());
        }
        for i in 0..11 {
            g.insert(format!("b{i}"), "y".to_string());
        }
        let f = make_group_folds(&g, 5, 3).unwrap();
        for prefix in ["a", "b"] {
            let counts: Vec<usize> = (0..5)
                .map(|fold| f.videos_in(fold).iter().filter(|v| v.starts_with(prefix)).count())
                .collect();
            let (mn, mx) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(mx - mn <= 1, "{prefix}: {counts:?}");
        }
    }

    #[test]
    fn seed_determinism() {
        assert_eq!(
            make_group_folds(&groups(50), 4, 11).unwrap(),
            make_group_folds(&groups(50), 4, 11).unwrap()
        );
        assert_ne!(
            make_group_folds(&groups(50), 4, 11).unwrap(),
            make_group_folds(&groups(50), 4, 12).unwrap()
        );
    }
}
