//! Evaluation protocols (within-subject cross-validation, leave-one-
//! subject-out, fine-tuning sweeps), the exact paired sign-rank test, and
//! deterministic result reporting.

use crate::data::{split_indices, EpochSet, SplitPlan, SplitSpec};
use crate::error::{Error, Result};
use crate::network::{init_params, ArchConfig, ModelParams};
use crate::training::{fine_tune, predict, train, TrainConfig};
use crate::util::{mean, mix_seed, std_pop};

/// Fraction of each training pool carved out as the validation split.
pub const VALIDATION_FRACTION: f64 = 1.0 / 9.0;
/// Held-out subject pool/test split used by the fine-tuning sweep.
pub const FINETUNE_TEST_FRACTION: f64 = 0.2;

pub fn accuracy(predictions: &[u32], labels: &[u32]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape {
            context: "accuracy",
            msg: format!("{} predictions, {} labels", predictions.len(), labels.len()),
        });
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

fn assert_disjoint_cover(train: &[usize], val: &[usize], test: &[usize], n: usize) {
    let mut seen = vec![0u8; n];
    for &i in train.iter().chain(val).chain(test) {
        seen[i] += 1;
    }
    assert!(
        seen.iter().all(|&c| c == 1),
        "split roles must partition the trials exactly once"
    );
}

/// Within-subject K-fold cross-validation: every fold serves as the test
/// set once, a stratified slice of the remaining trials is validation,
/// and the model is reinitialized per fold.
#[derive(Debug, Clone, PartialEq)]
pub struct IntraResult {
    pub subject_id: u32,
    pub fold_accuracies: Vec<f64>,
}

impl IntraResult {
    pub fn mean(&self) -> f64 {
        mean(&self.fold_accuracies)
    }

    pub fn std(&self) -> f64 {
        std_pop(&self.fold_accuracies)
    }
}

pub fn run_intra(
    es: &EpochSet,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    n_folds: usize,
) -> Result<IntraResult> {
    cfg.validate()?;
    let mut fold_accuracies = Vec::with_capacity(n_folds);
    for fold in 0..n_folds {
        let plan = SplitPlan {
            // Same seed for every fold: one partition, rotating test fold.
            seed: mix_seed(cfg.seed, &[0x1A7A, es.subject_id as u64]),
            spec: SplitSpec::KFold {
                folds: n_folds,
                test_fold: fold,
                validation_fraction: VALIDATION_FRACTION,
            },
            stratify_by_label: true,
        };
        let (tr_idx, va_idx, te_idx) = split_indices(es, &plan)?;
        assert_disjoint_cover(&tr_idx, &va_idx, &te_idx, es.n_trials());
        let tr = es.take_trials(&tr_idx);
        let va = es.take_trials(&va_idx);
        let te = es.take_trials(&te_idx);

        let init = init_params(arch, mix_seed(cfg.seed, &[0x171A, fold as u64]))?;
        let mut fold_cfg = cfg.clone();
        fold_cfg.seed = mix_seed(cfg.seed, &[0x17A1, fold as u64]);
        let (best, _) = train(arch, &init, &tr, &va, &fold_cfg)?;
        fold_accuracies.push(accuracy(&predict(arch, &best, &te)?, &te.labels)?);
    }
    Ok(IntraResult {
        subject_id: es.subject_id,
        fold_accuracies,
    })
}

/// Leave-one-subject-out accuracies, one per held-out subject.
#[derive(Debug, Clone, PartialEq)]
pub struct InterResult {
    pub subject_ids: Vec<u32>,
    pub accuracies: Vec<f64>,
}

impl InterResult {
    pub fn mean(&self) -> f64 {
        mean(&self.accuracies)
    }

    pub fn std(&self) -> f64 {
        std_pop(&self.accuracies)
    }
}

fn check_cohort(cohort: &[EpochSet]) -> Result<()> {
    if cohort.len() < 2 {
        return Err(Error::InvalidArgument(
            "cross-subject protocols need at least 2 subjects".into(),
        ));
    }
    let mut ids: Vec<u32> = cohort.iter().map(|s| s.subject_id).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != cohort.len() {
        return Err(Error::InvalidArgument(
            "cohort subject ids must be unique".into(),
        ));
    }
    Ok(())
}

/// Train the model used when `cohort[held_out]` is the unseen subject:
/// pooled trials of every other subject, with a stratified validation
/// slice drawn from that pool only. Seeds derive from the held-out
/// subject id, so the fine-tuning sweep reproduces this model exactly.
pub fn inter_base_model(
    cohort: &[EpochSet],
    held_out: usize,
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    check_cohort(cohort)?;
    let held_id = cohort[held_out].subject_id as u64;
    let others: Vec<&EpochSet> = cohort
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != held_out)
        .map(|(_, s)| s)
        .collect();
    let pool = EpochSet::concat_sets(&others)?;
    let plan = SplitPlan {
        seed: mix_seed(cfg.seed, &[0x105E, held_id]),
        spec: SplitSpec::Fractions {
            train: 1.0 - VALIDATION_FRACTION,
            validation: VALIDATION_FRACTION,
            test: 0.0,
        },
        stratify_by_label: true,
    };
    let (tr_idx, va_idx, te_idx) = split_indices(&pool, &plan)?;
    assert_disjoint_cover(&tr_idx, &va_idx, &te_idx, pool.n_trials());
    let tr = pool.take_trials(&tr_idx);
    let va = pool.take_trials(&va_idx);

    let init = init_params(arch, mix_seed(cfg.seed, &[0x1217, held_id]))?;
    let mut base_cfg = cfg.clone();
    base_cfg.seed = mix_seed(cfg.seed, &[0x105A, held_id]);
    let (best, _) = train(arch, &init, &tr, &va, &base_cfg)?;
    Ok(best)
}

pub fn run_inter_base(
    cohort: &[EpochSet],
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<InterResult> {
    check_cohort(cohort)?;
    let mut subject_ids = Vec::with_capacity(cohort.len());
    let mut accuracies = Vec::with_capacity(cohort.len());
    for held_out in 0..cohort.len() {
        let model = inter_base_model(cohort, held_out, arch, cfg)?;
        let held = &cohort[held_out];
        subject_ids.push(held.subject_id);
        accuracies.push(accuracy(&predict(arch, &model, held)?, &held.labels)?);
    }
    Ok(InterResult {
        subject_ids,
        accuracies,
    })
}

/// Accuracy of the transferred model after fine-tuning on growing
/// fractions of the held-out subject's data. `accuracies[s][f]` is
/// subject `s` at `fractions[f]`; fraction 0 evaluates the base model
/// unchanged. Each subject's test split is fixed across fractions.
/// `base_accuracies[s]` scores the untouched base model on subject `s`'s
/// full trial set, matching the plain held-out-subject protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub subject_ids: Vec<u32>,
    pub fractions: Vec<f64>,
    pub accuracies: Vec<Vec<f64>>,
    pub base_accuracies: Vec<f64>,
}

impl SweepResult {
    /// Mean accuracy across subjects at fraction index `f`.
    pub fn mean_at(&self, f: usize) -> f64 {
        let col: Vec<f64> = self.accuracies.iter().map(|row| row[f]).collect();
        mean(&col)
    }

    /// Mean full-subject accuracy of the base models.
    pub fn base_mean(&self) -> f64 {
        mean(&self.base_accuracies)
    }
}

/// The held-out subject's own pool/test split used by the sweep: 80% of
/// trials may be consumed for fine-tuning, 20% are never touched until
/// scoring. Seeded by subject id only, so it is identical across
/// fractions and protocol reruns.
pub fn finetune_pool_split(es: &EpochSet, cfg: &TrainConfig) -> Result<(EpochSet, EpochSet)> {
    let plan = SplitPlan {
        seed: mix_seed(cfg.seed, &[0x805, es.subject_id as u64]),
        spec: SplitSpec::Fractions {
            train: 1.0 - FINETUNE_TEST_FRACTION,
            validation: 0.0,
            test: FINETUNE_TEST_FRACTION,
        },
        stratify_by_label: true,
    };
    let (pool_idx, va_idx, test_idx) = split_indices(es, &plan)?;
    assert!(va_idx.is_empty());
    assert_disjoint_cover(&pool_idx, &va_idx, &test_idx, es.n_trials());
    Ok((es.take_trials(&pool_idx), es.take_trials(&test_idx)))
}

pub fn run_inter_finetuned(
    cohort: &[EpochSet],
    arch: &ArchConfig,
    cfg: &TrainConfig,
    fractions: &[f64],
) -> Result<SweepResult> {
    check_cohort(cohort)?;
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no fractions to sweep".into()));
    }
    for f in fractions {
        if !(0.0..=1.0).contains(f) {
            return Err(Error::InvalidArgument(format!(
                "fine-tune fraction {f} outside [0, 1]"
            )));
        }
    }
    let mut subject_ids = Vec::with_capacity(cohort.len());
    let mut accuracies = Vec::with_capacity(cohort.len());
    let mut base_accuracies = Vec::with_capacity(cohort.len());
    for held_out in 0..cohort.len() {
        let held = &cohort[held_out];
        let base = inter_base_model(cohort, held_out, arch, cfg)?;
        base_accuracies.push(accuracy(&predict(arch, &base, held)?, &held.labels)?);
        let (pool, test) = finetune_pool_split(held, cfg)?;

        let mut row = Vec::with_capacity(fractions.len());
        for &fraction in fractions {
            let model = if fraction == 0.0 {
                base.clone()
            } else {
                let mut ft_cfg = cfg.clone();
                ft_cfg.seed = mix_seed(cfg.seed, &[0xF17E, held.subject_id as u64]);
                ft_cfg.fine_tune_fraction = fraction;
                let (tuned, _) = fine_tune(arch, &base, &pool, fraction, &ft_cfg)?;
                tuned
            };
            row.push(accuracy(&predict(arch, &model, &test)?, &test.labels)?);
        }
        subject_ids.push(held.subject_id);
        accuracies.push(row);
    }
    Ok(SweepResult {
        subject_ids,
        fractions: fractions.to_vec(),
        accuracies,
        base_accuracies,
    })
}

/// Exact two-sided Wilcoxon signed-rank test for paired samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonTest {
    /// Pairs remaining after zero differences are dropped.
    pub n_used: usize,
    /// min(W+, W−) with midranks for tied absolute differences.
    pub w_statistic: f64,
    /// Exact two-sided p from the full sign-assignment distribution.
    pub p_value: f64,
}

pub const WILCOXON_MAX_N: usize = 25;

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonTest> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            context: "wilcoxon_signed_rank",
            msg: format!("{} vs {} samples", a.len(), b.len()),
        });
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let m = diffs.len();
    if m == 0 {
        return Err(Error::Stats(
            "all paired differences are zero; the sign-rank test is undefined".into(),
        ));
    }
    if m > WILCOXON_MAX_N {
        return Err(Error::Stats(format!(
            "exact enumeration supports at most {WILCOXON_MAX_N} non-zero differences, got {m}"
        )));
    }
    for d in &diffs {
        if !d.is_finite() {
            return Err(Error::Stats("non-finite difference".into()));
        }
    }

    // Midranks of |d|: ties share the average of the ranks they span.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut ranks = vec![0.0; m];
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = midrank;
        }
        i = j + 1;
    }

    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let total: f64 = ranks.iter().sum();
    let w_minus = total - w_plus;
    let w = w_plus.min(w_minus);

    // Midranks are multiples of 1/2; doubling gives exact integers, so
    // the null distribution of 2·W+ over all 2^m sign assignments is a
    // small integer subset-sum table.
    let ranks2: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
    let total2: u64 = ranks2.iter().sum();
    let mut dist = vec![0u64; total2 as usize + 1];
    dist[0] = 1;
    for &r2 in &ranks2 {
        for t in (r2 as usize..dist.len()).rev() {
            dist[t] += dist[t - r2 as usize];
        }
    }
    let w2 = (2.0 * w).round() as u64;
    let lower: u64 = dist.iter().take(w2 as usize + 1).sum();
    let upper_start = total2 - w2;
    let count = if upper_start <= w2 {
        1u64 << m
    } else {
        let upper: u64 = dist[upper_start as usize..].iter().sum();
        lower + upper
    };
    let p_value = (count as f64 / (1u64 << m) as f64).min(1.0);
    Ok(WilcoxonTest {
        n_used: m,
        w_statistic: w,
        p_value,
    })
}

/// "60.08% ± 10.63%" rendering of a sample of accuracies.
pub fn format_mean_std_percent(values: &[f64]) -> String {
    format!(
        "{:.2}% ± {:.2}%",
        mean(values) * 100.0,
        std_pop(values) * 100.0
    )
}

/// Deterministic plain-text study report: one line per condition with its
/// per-unit accuracies, then every pairwise sign-rank comparison. Pairs
/// with identical samples are reported as such rather than tested.
pub fn study_report(conditions: &[(String, Vec<f64>)]) -> Result<String> {
    if conditions.is_empty() {
        return Err(Error::InvalidArgument("no conditions to report".into()));
    }
    let name_width = conditions
        .iter()
        .map(|(n, _)| n.len())
        .max()
        .unwrap()
        .max(9);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_width$}  {:>17}  per-unit accuracy\n",
        "condition", "mean ± std"
    ));
    for (name, vals) in conditions {
        if vals.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "condition {name} has no values"
            )));
        }
        let list = vals
            .iter()
            .map(|v| format!("{:.2}", v * 100.0))
            .collect::<Vec<_>>()
            .join(" ");
        out.push_str(&format!(
            "{name:<name_width$}  {:>17}  {list}\n",
            format_mean_std_percent(vals)
        ));
    }
    out.push('\n');
    out.push_str("pairwise sign-rank tests (exact, two-sided)\n");
    for i in 0..conditions.len() {
        for j in i + 1..conditions.len() {
            let (na, va) = &conditions[i];
            let (nb, vb) = &conditions[j];
            let line = if va.len() != vb.len() {
                "skipped (unpaired sample sizes)".to_string()
            } else {
                match wilcoxon_signed_rank(va, vb) {
                    Ok(t) => format!(
                        "W = {:.1}, n = {}, p = {:.4}",
                        t.w_statistic, t.n_used, t.p_value
                    ),
                    Err(Error::Stats(_)) => "identical samples".to_string(),
                    Err(e) => return Err(e),
                }
            };
            out.push_str(&format!("{na} vs {nb}: {line}\n"));
        }
    }
    Ok(out)
}
