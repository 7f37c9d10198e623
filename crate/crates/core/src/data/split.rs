//! Deterministic trial splitting for cross-validation protocols.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EpochSet;
use crate::error::{Error, Result};
use crate::util::mix_seed;

/// How to carve an epoch set into train/validation/test roles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    /// Random split by fractions; must sum to 1 within 1e-9.
    Fractions {
        train: f64,
        validation: f64,
        test: f64,
    },
    /// K-fold: fold `test_fold` is the test set and `validation_fraction`
    /// of the remaining trials becomes validation.
    KFold {
        folds: usize,
        test_fold: usize,
        validation_fraction: f64,
    },
}

/// Seeded, optionally label-stratified split request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPlan {
    pub seed: u64,
    pub spec: SplitSpec,
    pub stratify_by_label: bool,
}

impl SplitPlan {
    fn validate(&self) -> Result<()> {
        match self.spec {
            SplitSpec::Fractions {
                train,
                validation,
                test,
            } => {
                if train < 0.0 || validation < 0.0 || test < 0.0 {
                    return Err(Error::InvalidArgument(
                        "split fractions must be non-negative".into(),
                    ));
                }
                if ((train + validation + test) - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "split fractions sum to {}, expected 1",
                        train + validation + test
                    )));
                }
            }
            SplitSpec::KFold {
                folds,
                test_fold,
                validation_fraction,
            } => {
                if folds < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "k-fold needs >= 2 folds, got {folds}"
                    )));
                }
                if test_fold >= folds {
                    return Err(Error::InvalidArgument(format!(
                        "test fold {test_fold} out of range for {folds} folds"
                    )));
                }
                if !(0.0..1.0).contains(&validation_fraction) {
                    return Err(Error::InvalidArgument(format!(
                        "validation fraction {validation_fraction} outside [0,1)"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Group trial indices: one group per class when stratifying, otherwise a
/// single group. Each group is shuffled with its own derived seed.
fn shuffled_groups(es: &EpochSet, seed: u64, stratify: bool) -> Vec<Vec<usize>> {
    let groups: Vec<Vec<usize>> = if stratify {
        let mut by_class = vec![Vec::new(); es.n_classes()];
        for (i, &l) in es.labels.iter().enumerate() {
            by_class[l as usize].push(i);
        }
        by_class
    } else {
        vec![(0..es.n_trials()).collect()]
    };
    groups
        .into_iter()
        .enumerate()
        .map(|(g, mut idx)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0x5117, g as u64]));
            idx.shuffle(&mut rng);
            idx
        })
        .collect()
}

/// Allocate `n` items to roles by fraction with largest-remainder
/// rounding, so the counts sum to `n` exactly.
fn allocate(n: usize, fracs: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut short = n - counts.iter().sum::<usize>();
    // Ties go to the earlier role; order is (train, validation, test).
    let mut order: Vec<usize> = (0..fracs.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    counts
}

/// Split an epoch set into train/validation/test.
///
/// Deterministic given the plan; stratified splits preserve per-class
/// proportions within one trial. Returned sets keep the source trial
/// order within each role ascending by original index.
pub fn split(es: &EpochSet, plan: &SplitPlan) -> Result<(EpochSet, EpochSet, EpochSet)> {
    plan.validate()?;
    let (train_idx, val_idx, test_idx) = split_indices(es, plan)?;
    Ok((
        es.take_trials(&train_idx),
        es.take_trials(&val_idx),
        es.take_trials(&test_idx),
    ))
}

/// Index-level version of [`split`]; indices are returned sorted.
pub fn split_indices(
    es: &EpochSet,
    plan: &SplitPlan,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    plan.validate()?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    match plan.spec {
        SplitSpec::Fractions {
            train: ft,
            validation: fv,
            test: fs,
        } => {
            for group in shuffled_groups(es, plan.seed, plan.stratify_by_label) {
                let counts = allocate(group.len(), &[ft, fv, fs]);
                let (a, rest) = group.split_at(counts[0]);
                let (b, c) = rest.split_at(counts[1]);
                train.extend_from_slice(a);
                val.extend_from_slice(b);
                test.extend_from_slice(c);
            }
        }
        SplitSpec::KFold {
            folds,
            test_fold,
            validation_fraction,
        } => {
            let assignment = kfold_indices(es, folds, plan.seed, plan.stratify_by_label)?;
            let mut pool = Vec::new();
            for (i, &f) in assignment.iter().enumerate() {
                if f == test_fold {
                    test.push(i);
                } else {
                    pool.push(i);
                }
            }
            if validation_fraction == 0.0 {
                train = pool;
            } else {
                // Carve validation from the pool, stratified the same way.
                let pool_set = es.take_trials(&pool);
                for group in shuffled_groups(
                    &pool_set,
                    mix_seed(plan.seed, &[0x7a1, test_fold as u64]),
                    plan.stratify_by_label,
                ) {
                    let n_val = (group.len() as f64 * validation_fraction).round() as usize;
                    let n_val = n_val.min(group.len().saturating_sub(1));
                    for (j, &local) in group.iter().enumerate() {
                        if j < n_val {
                            val.push(pool[local]);
                        } else {
                            train.push(pool[local]);
                        }
                    }
                }
            }
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((train, val, test))
}

/// Assign each trial to one of `folds` folds (returned as a per-trial
/// fold id). Stratified assignment deals each class round-robin after a
/// seeded shuffle, so per-class fold sizes differ by at most one.
pub fn kfold_indices(
    es: &EpochSet,
    folds: usize,
    seed: u64,
    stratify: bool,
) -> Result<Vec<usize>> {
    if folds < 2 || folds > es.n_trials() {
        return Err(Error::InvalidArgument(format!(
            "cannot make {folds} folds from {} trials",
            es.n_trials()
        )));
    }
    if stratify {
        for (class, count) in es.class_counts().iter().enumerate() {
            if *count < folds {
                return Err(Error::TooFewTrials {
                    class,
                    count: *count,
                    needed: folds,
                });
            }
        }
    }
    let mut assignment = vec![0usize; es.n_trials()];
    // One round-robin cursor across all groups: per-class fold counts
    // differ by at most one AND overall fold sizes stay within one.
    let mut next = 0usize;
    for group in shuffled_groups(es, seed, stratify) {
        for &idx in &group {
            assignment[idx] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}
