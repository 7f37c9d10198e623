//! Loss, Adam, the two-value learning-rate schedule, the training loop,
//! and fine-tuning on a new subject.
//!
//! Determinism: every stochastic choice (epoch shuffles, dropout masks,
//! fine-tune subset selection) is drawn from a ChaCha stream whose seed is
//! derived from `TrainConfig::seed` plus structural indices, so a run is
//! bit-reproducible.

use ndarray::{Array2, Array3, ArrayD, ArrayViewMutD, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Graph;
use crate::data::EpochSet;
use crate::error::{Error, Result};
use crate::network::{
    self, update_running_stats, ArchConfig, Mode, ModelParams,
};
use crate::util::mix_seed;

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_reduced: f64,
    /// Consecutive validation-accuracy decreases that trigger the single
    /// permanent drop to `lr_reduced`.
    pub patience_for_drop: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Fraction of a new subject's pool used by fine-tuning, in [0, 1].
    pub fine_tune_fraction: f64,
    /// When fine-tuning, update only the recurrent and output layers and
    /// keep the convolutional front end fixed. Off by default.
    pub freeze_feature_extractor: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 100,
            batch_size: 64,
            lr_initial: 0.1,
            lr_reduced: 0.01,
            patience_for_drop: 2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            fine_tune_fraction: 0.2,
            freeze_feature_extractor: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_reduced > 0.0 && self.lr_reduced < self.lr_initial) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < lr_reduced < lr_initial, got {} and {}",
                self.lr_reduced, self.lr_initial
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "batch_size must be at least 2 (batch statistics)".into(),
            ));
        }
        if self.patience_for_drop == 0 {
            return Err(Error::InvalidArgument("patience_for_drop must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} {b} outside [0, 1)")));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.fine_tune_fraction) {
            return Err(Error::InvalidArgument(format!(
                "fine_tune_fraction {} outside [0, 1]",
                self.fine_tune_fraction
            )));
        }
        Ok(())
    }
}

/// Per-epoch record of one training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub learning_rate: Vec<f64>,
}

impl TrainHistory {
    pub fn n_epochs(&self) -> usize {
        self.val_accuracy.len()
    }

    /// Check the structural invariants: equal column lengths and a
    /// non-increasing learning-rate sequence with at most two values.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_epochs();
        if self.train_loss.len() != n
            || self.train_accuracy.len() != n
            || self.learning_rate.len() != n
        {
            return Err(Error::InvalidArgument(
                "history columns have unequal lengths".into(),
            ));
        }
        let mut values: Vec<f64> = Vec::new();
        for w in self.learning_rate.windows(2) {
            if w[1] > w[0] {
                return Err(Error::InvalidArgument(
                    "learning rate increased across epochs".into(),
                ));
            }
        }
        for &lr in &self.learning_rate {
            if !values.contains(&lr) {
                values.push(lr);
            }
        }
        if values.len() > 2 {
            return Err(Error::InvalidArgument(
                "learning rate took more than two values".into(),
            ));
        }
        Ok(())
    }
}

/// Mean negative log-likelihood: `−(1/batch)·Σ log probs[i][label_i]`.
///
/// Direct form for probabilities that already sum to 1 per row. The
/// training loop computes the same quantity from logits through
/// log-sum-exp (see [`loss_and_grads`]); on shared inputs the two agree
/// to near machine precision.
pub fn cross_entropy(probs: &Array2<f64>, labels: &[u32]) -> Result<f64> {
    let (n, k) = probs.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("cross_entropy: empty batch".into()));
    }
    if labels.len() != n {
        return Err(Error::Shape {
            context: "cross_entropy",
            msg: format!("{n} rows but {} labels", labels.len()),
        });
    }
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label as usize >= k {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        total -= probs[[i, label as usize]].ln();
    }
    Ok(total / n as f64)
}

/// Adam first/second moments, aligned with [`ModelParams::trainable`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<ArrayD<f64>> = params
            .trainable()
            .iter()
            .map(|a| ArrayD::zeros(a.raw_dim()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One Adam update over a list of arrays:
/// `m←β1m+(1−β1)g; v←β2v+(1−β2)g²; θ←θ−lr·m̂/(√v̂+ε)` with bias-corrected
/// `m̂ = m/(1−β1^t)`, `v̂ = v/(1−β2^t)`. Increments `state.t` first.
pub fn adam_step_arrays(
    params: &mut [ArrayViewMutD<'_, f64>],
    grads: &[ArrayD<f64>],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape {
            context: "adam_step",
            msg: format!(
                "{} params, {} grads, {} moment arrays",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        if params[i].shape() != grads[i].shape() {
            return Err(Error::Shape {
                context: "adam_step",
                msg: format!(
                    "param {:?} vs grad {:?} at index {i}",
                    params[i].shape(),
                    grads[i].shape()
                ),
            });
        }
        let g = &grads[i];
        let m = &mut state.m[i];
        m.zip_mut_with(g, |mm, &gg| *mm = beta1 * *mm + (1.0 - beta1) * gg);
        let v = &mut state.v[i];
        v.zip_mut_with(g, |vv, &gg| *vv = beta2 * *vv + (1.0 - beta2) * gg * gg);
        ndarray::Zip::from(&mut params[i])
            .and(&*m)
            .and(&*v)
            .for_each(|p, &mm, &vv| {
                let m_hat = mm / bc1;
                let v_hat = vv / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            });
    }
    Ok(())
}

/// One Adam update of a full model.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[ArrayD<f64>],
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut views = params.trainable_mut();
    adam_step_arrays(&mut views, grads, state, lr, cfg.beta1, cfg.beta2, cfg.epsilon)
}

/// Learning rate in effect for the epoch after the recorded history:
/// `lr_initial` until validation accuracy has strictly decreased over
/// `patience_for_drop` consecutive epochs, `lr_reduced` permanently from
/// the next epoch on.
pub fn lr_schedule(val_accuracies: &[f64], cfg: &TrainConfig) -> f64 {
    let p = cfg.patience_for_drop;
    for e in p..val_accuracies.len() {
        if (0..p).all(|j| val_accuracies[e - j] < val_accuracies[e - j - 1]) {
            return cfg.lr_reduced;
        }
    }
    cfg.lr_initial
}

/// Loss and parameter gradients for one batch.
pub struct LossGrads {
    pub loss: f64,
    /// Gradients in [`ModelParams::trainable`] order.
    pub grads: Vec<ArrayD<f64>>,
    /// Softmax probabilities of the batch.
    pub probs: Array2<f64>,
    pub(crate) bn_stats: Option<crate::network::graph::BnBatchStats>,
}

/// Differentiate the mean cross-entropy of one batch with respect to all
/// trainable parameters. The loss is computed from logits through a
/// shifted log-sum-exp, so saturated probabilities cannot produce
/// `log(0)`.
pub fn loss_and_grads(
    arch: &ArchConfig,
    params: &ModelParams,
    x: &Array3<f64>,
    labels: &[u32],
    mode: Mode,
) -> Result<LossGrads> {
    let batch = x.dim().0;
    if labels.len() != batch {
        return Err(Error::Shape {
            context: "loss_and_grads",
            msg: format!("{batch} trials but {} labels", labels.len()),
        });
    }
    let k = arch.n_classes;
    for &l in labels {
        if l as usize >= k {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {k} classes"
            )));
        }
    }

    let g = Graph::new();
    let out = network::graph::build_graph(&g, arch, params, x, mode, true)?;
    let logits_val = out
        .logits
        .value()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("logits are 2-d");

    // Shift by the per-row max (a constant: any constant shift leaves both
    // the loss value and its gradient unchanged).
    let row_max = Array2::from_shape_fn((batch, 1), |(i, _)| {
        logits_val.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    });
    let mut one_hot = Array2::zeros((batch, k));
    for (i, &l) in labels.iter().enumerate() {
        one_hot[[i, l as usize]] = 1.0;
    }
    let shifted = out.logits - g.constant(row_max.clone().into_dyn());
    let lse = shifted.exp().sum(1).log();
    let correct = (shifted * g.constant(one_hot.into_dyn())).sum(1);
    let loss_t = (lse - correct).mean(0);
    let loss = loss_t.value()[ndarray::IxDyn(&[])];
    g.backward(loss_t)?;

    let grads: Vec<ArrayD<f64>> = out
        .leaves
        .iter()
        .map(|&t| g.grad(t).expect("trainable leaf has a gradient"))
        .collect();

    // Probabilities for accuracy bookkeeping (host-side softmax on the
    // same shifted logits).
    let mut probs = Array2::zeros((batch, k));
    for i in 0..batch {
        let mut z = 0.0;
        for j in 0..k {
            let e = (logits_val[[i, j]] - row_max[[i, 0]]).exp();
            probs[[i, j]] = e;
            z += e;
        }
        for j in 0..k {
            probs[[i, j]] /= z;
        }
    }

    Ok(LossGrads {
        loss,
        grads,
        probs,
        bn_stats: out.bn_stats,
    })
}

/// Class predictions (argmax; ties to the lowest class index) for a whole
/// epoch set, evaluated in inference mode in bounded chunks.
pub fn predict(arch: &ArchConfig, params: &ModelParams, es: &EpochSet) -> Result<Vec<u32>> {
    let n = es.n_trials();
    let mut out = Vec::with_capacity(n);
    let chunk = 256;
    let mut start = 0;
    while start < n {
        let stop = (start + chunk).min(n);
        let idx: Vec<usize> = (start..stop).collect();
        let x = es.epochs.select(Axis(0), &idx);
        let probs = network::forward(arch, params, &x, Mode::Infer)?;
        for i in 0..probs.nrows() {
            let mut best = 0usize;
            for j in 1..probs.ncols() {
                if probs[[i, j]] > probs[[i, best]] {
                    best = j;
                }
            }
            out.push(best as u32);
        }
        start = stop;
    }
    Ok(out)
}

fn fraction_correct(predictions: &[u32], labels: &[u32]) -> f64 {
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    hits as f64 / labels.len() as f64
}

fn check_set(arch: &ArchConfig, es: &EpochSet, what: &str) -> Result<()> {
    if es.n_trials() == 0 {
        return Err(Error::InvalidArgument(format!("{what} split is empty")));
    }
    if es.n_channels() != arch.n_channels || es.n_time() != arch.n_time {
        return Err(Error::Shape {
            context: "train",
            msg: format!(
                "{what} trials are [{} x {}], architecture expects [{} x {}]",
                es.n_channels(),
                es.n_time(),
                arch.n_channels,
                arch.n_time
            ),
        });
    }
    if let Some(&l) = es.labels.iter().find(|&&l| l as usize >= arch.n_classes) {
        return Err(Error::InvalidArgument(format!(
            "{what} label {l} out of range for {} classes",
            arch.n_classes
        )));
    }
    Ok(())
}

enum LrPolicy {
    /// The two-value schedule driven by validation accuracy.
    Scheduled,
    /// Constant learning rate (fine-tuning).
    Fixed(f64),
}

fn run_training(
    arch: &ArchConfig,
    init: &ModelParams,
    train_set: &EpochSet,
    val_set: &EpochSet,
    cfg: &TrainConfig,
    policy: LrPolicy,
) -> Result<(ModelParams, TrainHistory)> {
    arch.validate()?;
    cfg.validate()?;
    check_set(arch, train_set, "training")?;
    check_set(arch, val_set, "validation")?;
    let n = train_set.n_trials();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "training split needs at least 2 trials for batch statistics".into(),
        ));
    }

    let mut params = init.clone();
    let mut adam = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 0..cfg.max_epochs {
        let lr = match policy {
            LrPolicy::Scheduled => lr_schedule(&history.val_accuracy, cfg),
            LrPolicy::Fixed(lr) => lr,
        };

        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[0xE9_0C4, epoch as u64]));
        order.shuffle(&mut rng);

        // Chunk into mini-batches; a trailing single trial is folded into
        // the previous batch so batch statistics stay defined.
        let mut batches: Vec<Vec<usize>> =
            order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
        if batches.len() >= 2 && batches.last().map(Vec::len) == Some(1) {
            let tail = batches.pop().unwrap();
            batches.last_mut().unwrap().extend(tail);
        }

        let mut loss_sum = 0.0;
        let mut hit_count = 0usize;
        for (bi, batch_idx) in batches.iter().enumerate() {
            let x = train_set.epochs.select(Axis(0), batch_idx);
            let labels: Vec<u32> = batch_idx.iter().map(|&i| train_set.labels[i]).collect();
            let dropout_seed = mix_seed(cfg.seed, &[0xD0_u64, epoch as u64, bi as u64]);
            let lg = loss_and_grads(arch, &params, &x, &labels, Mode::Train { dropout_seed })?;
            if !lg.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            if let Some(stats) = &lg.bn_stats {
                update_running_stats(&mut params.bn1, &stats.bn1.0, &stats.bn1.1, arch.bn_momentum);
                update_running_stats(&mut params.bn2, &stats.bn2.0, &stats.bn2.1, arch.bn_momentum);
            }
            let mut grads = lg.grads;
            if cfg.freeze_feature_extractor {
                // Convolution and BN parameters are the first 7 arrays in
                // canonical order.
                for gr in grads.iter_mut().take(7) {
                    gr.fill(0.0);
                }
            }
            adam_step(&mut params, &grads, &mut adam, lr, cfg)?;
            loss_sum += lg.loss * batch_idx.len() as f64;
            for (row, &want) in labels.iter().enumerate() {
                let mut arg = 0usize;
                for j in 1..arch.n_classes {
                    if lg.probs[[row, j]] > lg.probs[[row, arg]] {
                        arg = j;
                    }
                }
                if arg as u32 == want {
                    hit_count += 1;
                }
            }
        }

        let val_pred = predict(arch, &params, val_set)?;
        let val_acc = fraction_correct(&val_pred, &val_set.labels);
        history.train_loss.push(loss_sum / n as f64);
        history.train_accuracy.push(hit_count as f64 / n as f64);
        history.val_accuracy.push(val_acc);
        history.learning_rate.push(lr);

        let better = match &best {
            None => true,
            Some((acc, _, _)) => val_acc > *acc,
        };
        if better {
            best = Some((val_acc, epoch, params.clone()));
        }
    }

    let (_, _, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, history))
}

/// Train from `init` with the scheduled learning rate, returning the
/// parameters of the epoch with the best validation accuracy (earliest on
/// ties) and the full per-epoch history.
pub fn train(
    arch: &ArchConfig,
    init: &ModelParams,
    train_set: &EpochSet,
    val_set: &EpochSet,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    run_training(arch, init, train_set, val_set, cfg, LrPolicy::Scheduled)
}

/// Stratified seeded selection of about `fraction` of the trials: per
/// class, `round(fraction · count)` trials, error if that is zero for any
/// class present.
pub fn stratified_fraction_indices(
    es: &EpochSet,
    fraction: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) || fraction <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    let mut by_class: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &l) in es.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut selected = Vec::new();
    for (&class, idx) in &by_class {
        let k = (fraction * idx.len() as f64).round() as usize;
        if k == 0 {
            return Err(Error::TooFewTrials {
                class: class as usize,
                count: idx.len(),
                needed: (1.0 / fraction).ceil() as usize,
            });
        }
        let mut shuffled = idx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0xF1_7E, class as u64]));
        shuffled.shuffle(&mut rng);
        selected.extend_from_slice(&shuffled[..k]);
    }
    selected.sort_unstable();
    Ok(selected)
}

/// Continue training `base` on a stratified fraction of a new subject's
/// pool at the constant reduced learning rate. All parameters update
/// unless `cfg.freeze_feature_extractor` is set. The whole selection is
/// both the training and the monitoring set: fractions are small enough
/// that a held-out sliver would be a handful of trials, making epoch
/// selection noise-dominated, and adaptation quality is judged on the
/// caller's fixed test partition anyway.
pub fn fine_tune(
    arch: &ArchConfig,
    base: &ModelParams,
    pool: &EpochSet,
    fraction: f64,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    check_set(arch, pool, "fine-tune pool")?;
    let selected = stratified_fraction_indices(pool, fraction, mix_seed(cfg.seed, &[0xF7]))?;
    let subset = pool.take_trials(&selected);
    run_training(arch, base, &subset, &subset, cfg, LrPolicy::Fixed(cfg.lr_reduced))
}
