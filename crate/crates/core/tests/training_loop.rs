//! Training-loop contracts: gradients against central differences on the
//! full model, loss consistency, determinism, overfitting sanity, and
//! fine-tuning behavior.

use ndarray::{Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eegdec::data::EpochSet;
use eegdec::network::{init_params, ArchConfig, Mode};
use eegdec::training::{
    cross_entropy, fine_tune, loss_and_grads, predict, stratified_fraction_indices, train,
    AdamState, TrainConfig,
};
use eegdec::Error;

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        n_channels: 3,
        n_time: 32,
        segment_len: 8,
        n_temporal_filters: 2,
        depth_multiplier: 2,
        lstm_hidden: 3,
        n_classes: 3,
        dropout_rate: 0.25,
        bn_epsilon: 1e-5,
        bn_momentum: 0.1,
    }
}

fn random_input(arch: &ArchConfig, n: usize, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn((n, arch.n_channels, arch.n_time), |_| {
        rng.gen_range(-1.5..1.5)
    })
}

/// Class-separable toy trials: class k adds a distinct sinusoid on top of
/// small noise, strong enough to be trivially decodable.
fn separable_set(arch: &ArchConfig, per_class: usize, seed: u64) -> EpochSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = per_class * arch.n_classes;
    let mut epochs = Array3::zeros((n, arch.n_channels, arch.n_time));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % arch.n_classes) as u32;
        labels.push(class);
        let freq = 1.0 + class as f64; // cycles per trial
        for c in 0..arch.n_channels {
            for t in 0..arch.n_time {
                let phase = 2.0 * std::f64::consts::PI * freq * t as f64 / arch.n_time as f64;
                epochs[[i, c, t]] = 2.0 * phase.sin() + 0.1 * rng.gen_range(-1.0..1.0);
            }
        }
    }
    EpochSet {
        subject_id: 1,
        rate_hz: 256.0,
        channels: (0..arch.n_channels).map(|c| format!("C{c}")).collect(),
        epochs,
        labels,
        window_ms: (0.0, 1000.0),
        class_values_cpd: vec![0.05, 0.1, 0.3],
    }
}

#[test]
fn full_model_gradients_match_central_differences() {
    let arch = tiny_arch();
    let mut params = init_params(&arch, 7).unwrap();
    // Non-default running stats keep the inference path honest elsewhere;
    // the train path differentiates through batch statistics.
    let x = random_input(&arch, 4, 8);
    let labels = vec![0u32, 1, 2, 1];
    let mode = Mode::Train { dropout_seed: 99 };

    let lg = loss_and_grads(&arch, &params, &x, &labels, mode).unwrap();

    let eps = 1e-5;
    let mut max_rel = 0.0f64;
    let mut n_meaningful = 0usize;
    let mut coord_rng = ChaCha8Rng::seed_from_u64(3);
    let n_arrays = lg.grads.len();
    for ai in 0..n_arrays {
        let len = lg.grads[ai].len();
        let picks: Vec<usize> = if len <= 4 {
            (0..len).collect()
        } else {
            (0..4).map(|_| coord_rng.gen_range(0..len)).collect()
        };
        for flat in picks {
            let avals: Vec<f64> = [eps, -eps]
                .iter()
                .map(|&delta| {
                    {
                        let mut views = params.trainable_mut();
                        *views[ai].as_slice_mut().unwrap().get_mut(flat).unwrap() += delta;
                    }
                    let l = loss_and_grads(&arch, &params, &x, &labels, mode)
                        .unwrap()
                        .loss;
                    {
                        let mut views = params.trainable_mut();
                        *views[ai].as_slice_mut().unwrap().get_mut(flat).unwrap() -= delta;
                    }
                    l
                })
                .collect();
            let numeric = (avals[0] - avals[1]) / (2.0 * eps);
            let analytic = lg.grads[ai].as_slice().unwrap()[flat];
            let abs_err = (analytic - numeric).abs();
            if analytic.abs() + numeric.abs() > 1e-6 {
                let rel = abs_err / (analytic.abs() + numeric.abs());
                max_rel = max_rel.max(rel);
                n_meaningful += 1;
                assert!(
                    rel < 1e-4,
                    "array {ai} coord {flat}: analytic {analytic}, numeric {numeric}, rel {rel}"
                );
            } else {
                // Mathematically-zero gradients (e.g. a bias normalized
                // away by the following BN) read as pure difference noise
                // in the numeric estimate; both sides must sit at that
                // floor together.
                assert!(
                    abs_err < 1e-7,
                    "array {ai} coord {flat}: near-zero mismatch {analytic} vs {numeric}"
                );
            }
        }
    }
    // The check must have had teeth: most sampled coordinates carried a
    // real gradient.
    assert!(n_meaningful > 40, "only {n_meaningful} meaningful coords");
    assert!(max_rel > 0.0);
}

#[test]
fn in_graph_loss_matches_direct_cross_entropy() {
    let arch = tiny_arch();
    let params = init_params(&arch, 17).unwrap();
    let x = random_input(&arch, 6, 18);
    let labels = vec![0u32, 1, 2, 0, 1, 2];
    let lg = loss_and_grads(&arch, &params, &x, &labels, Mode::Infer).unwrap();
    let direct = cross_entropy(&lg.probs, &labels).unwrap();
    assert!(
        (lg.loss - direct).abs() < 1e-12,
        "{} vs {}",
        lg.loss,
        direct
    );
}

#[test]
fn one_small_step_strictly_decreases_single_example_loss() {
    // Single trial: batch statistics are undefined, so the check runs the
    // inference normalization path, which is just as differentiable.
    let arch = ArchConfig {
        dropout_rate: 0.0,
        ..tiny_arch()
    };
    let mut params = init_params(&arch, 27).unwrap();
    let x = random_input(&arch, 1, 28);
    let labels = vec![2u32];
    let cfg = TrainConfig::default();

    let before = loss_and_grads(&arch, &params, &x, &labels, Mode::Infer).unwrap();
    let mut adam = AdamState::new(&params);
    eegdec::training::adam_step(&mut params, &before.grads, &mut adam, 1e-4, &cfg).unwrap();
    let after = loss_and_grads(&arch, &params, &x, &labels, Mode::Infer).unwrap();
    assert!(
        after.loss < before.loss,
        "loss went {} -> {}",
        before.loss,
        after.loss
    );
}

#[test]
fn training_is_bit_reproducible() {
    let arch = tiny_arch();
    let data = separable_set(&arch, 8, 40);
    let val = separable_set(&arch, 4, 41);
    let init = init_params(&arch, 42).unwrap();
    let cfg = TrainConfig {
        max_epochs: 3,
        batch_size: 8,
        seed: 77,
        ..Default::default()
    };
    let (p1, h1) = train(&arch, &init, &data, &val, &cfg).unwrap();
    let (p2, h2) = train(&arch, &init, &data, &val, &cfg).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(p1, p2);

    let other = TrainConfig { seed: 78, ..cfg };
    let (_, h3) = train(&arch, &init, &data, &val, &other).unwrap();
    assert_ne!(h1, h3);
}

#[test]
fn overfits_separable_toy_set_within_epoch_budget() {
    let arch = ArchConfig {
        dropout_rate: 0.0,
        ..tiny_arch()
    };
    let data = separable_set(&arch, 11, 50); // 33 trials
    let init = init_params(&arch, 51).unwrap();
    let cfg = TrainConfig {
        max_epochs: 100,
        batch_size: 16,
        seed: 52,
        ..Default::default()
    };
    let (_, history) = train(&arch, &init, &data, &data, &cfg).unwrap();
    history.validate().unwrap();
    assert_eq!(history.n_epochs(), 100);
    let best = history
        .train_accuracy
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    assert_eq!(best, 1.0, "never reached perfect training accuracy");
}

#[test]
fn non_finite_loss_is_reported_with_location() {
    let arch = tiny_arch();
    let mut data = separable_set(&arch, 4, 60);
    data.epochs[[0, 0, 0]] = f64::NAN;
    let init = init_params(&arch, 61).unwrap();
    let cfg = TrainConfig {
        max_epochs: 2,
        batch_size: 12,
        seed: 62,
        ..Default::default()
    };
    match train(&arch, &init, &data, &data, &cfg) {
        Err(Error::NonFiniteLoss { epoch: 0, batch: 0 }) => {}
        other => panic!("expected non-finite loss at epoch 0 batch 0, got {other:?}"),
    }
}

#[test]
fn empty_splits_are_rejected() {
    let arch = tiny_arch();
    let data = separable_set(&arch, 4, 70);
    let empty = data.take_trials(&[]);
    let init = init_params(&arch, 71).unwrap();
    let cfg = TrainConfig {
        max_epochs: 1,
        ..Default::default()
    };
    assert!(train(&arch, &init, &empty, &data, &cfg).is_err());
    assert!(train(&arch, &init, &data, &empty, &cfg).is_err());
}

#[test]
fn trailing_singleton_batch_is_folded_into_previous() {
    let arch = tiny_arch();
    let data = separable_set(&arch, 3, 80); // 9 trials
    let init = init_params(&arch, 81).unwrap();
    let cfg = TrainConfig {
        max_epochs: 1,
        batch_size: 8, // 9 = 8 + 1: the 1 must merge, not crash BN
        seed: 82,
        ..Default::default()
    };
    let (_, h) = train(&arch, &init, &data, &data, &cfg).unwrap();
    assert_eq!(h.n_epochs(), 1);
}

#[test]
fn predict_chunking_is_seamless() {
    let arch = tiny_arch();
    let data = separable_set(&arch, 100, 90); // 300 trials > one 256 chunk
    let params = init_params(&arch, 91).unwrap();
    let preds = predict(&arch, &params, &data).unwrap();
    assert_eq!(preds.len(), 300);
    // Same predictions as a single full-batch inference pass.
    let probs = eegdec::network::forward(&arch, &params, &data.epochs, Mode::Infer).unwrap();
    for i in 0..300 {
        let mut arg = 0usize;
        for j in 1..arch.n_classes {
            if probs[[i, j]] > probs[[i, arg]] {
                arg = j;
            }
        }
        assert_eq!(preds[i], arg as u32, "trial {i}");
    }
}

#[test]
fn stratified_fraction_selection_contract() {
    let arch = tiny_arch();
    let data = separable_set(&arch, 10, 100); // 10 per class
    let idx = stratified_fraction_indices(&data, 0.2, 5).unwrap();
    assert_eq!(idx.len(), 6);
    let mut counts = [0usize; 3];
    for &i in &idx {
        counts[data.labels[i] as usize] += 1;
    }
    assert_eq!(counts, [2, 2, 2]);
    let again = stratified_fraction_indices(&data, 0.2, 5).unwrap();
    assert_eq!(idx, again);
    let other = stratified_fraction_indices(&data, 0.2, 6).unwrap();
    assert_ne!(idx, other);

    match stratified_fraction_indices(&data, 0.01, 5) {
        Err(Error::TooFewTrials { .. }) => {}
        other => panic!("expected too-few-trials, got {other:?}"),
    }
}

#[test]
fn fine_tune_full_fraction_uses_whole_pool() {
    let arch = tiny_arch();
    let data = separable_set(&arch, 6, 110);
    let idx = stratified_fraction_indices(&data, 1.0, 0).unwrap();
    assert_eq!(idx, (0..18).collect::<Vec<_>>());
}

#[test]
fn fine_tune_updates_all_layers_unless_frozen() {
    let arch = tiny_arch();
    let pool = separable_set(&arch, 9, 120);
    let base = init_params(&arch, 121).unwrap();
    let cfg = TrainConfig {
        max_epochs: 2,
        batch_size: 8,
        seed: 122,
        ..Default::default()
    };

    let (tuned, h) = fine_tune(&arch, &base, &pool, 0.5, &cfg).unwrap();
    h.validate().unwrap();
    // Constant reduced learning rate throughout.
    assert!(h.learning_rate.iter().all(|&lr| lr == cfg.lr_reduced));
    assert_ne!(tuned.w_temp, base.w_temp);
    assert_ne!(tuned.w_out, base.w_out);

    let frozen_cfg = TrainConfig {
        freeze_feature_extractor: true,
        ..cfg
    };
    let (frozen, _) = fine_tune(&arch, &base, &pool, 0.5, &frozen_cfg).unwrap();
    assert_eq!(frozen.w_temp, base.w_temp);
    assert_eq!(frozen.w_spat, base.w_spat);
    assert_eq!(frozen.bn1.gamma, base.bn1.gamma);
    assert_eq!(frozen.bn2.beta, base.bn2.beta);
    assert_ne!(frozen.w_out, base.w_out);
}

#[test]
fn fine_tune_rejects_fraction_below_one_trial_per_class() {
    let arch = tiny_arch();
    let pool = separable_set(&arch, 5, 130);
    let base = init_params(&arch, 131).unwrap();
    let cfg = TrainConfig {
        max_epochs: 1,
        ..Default::default()
    };
    assert!(fine_tune(&arch, &base, &pool, 0.05, &cfg).is_err());
}

#[test]
fn train_selects_best_validation_epoch() {
    // With train == val on separable data, the returned parameters must
    // score at least as well as every recorded epoch.
    let arch = ArchConfig {
        dropout_rate: 0.0,
        ..tiny_arch()
    };
    let data = separable_set(&arch, 8, 140);
    let init = init_params(&arch, 141).unwrap();
    let cfg = TrainConfig {
        max_epochs: 12,
        batch_size: 8,
        seed: 142,
        ..Default::default()
    };
    let (best_params, history) = train(&arch, &init, &data, &data, &cfg).unwrap();
    let preds = predict(&arch, &best_params, &data).unwrap();
    let hits = preds
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| p == l)
        .count();
    let returned_acc = hits as f64 / data.n_trials() as f64;
    let best_recorded = history
        .val_accuracy
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    assert!(
        (returned_acc - best_recorded).abs() < 1e-12,
        "returned {returned_acc}, best recorded {best_recorded}"
    );
}
