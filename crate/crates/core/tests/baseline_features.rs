//! Band-power feature and linear-classifier behaviour on signals with
//! known spectra and on synthetic feature clouds.

use eegdec::baseline::{
    band_power, band_power_features, periodogram, svm_fit, svm_predict, ALPHA_BAND_HZ,
    GAMMA_BAND_HZ,
};
use eegdec::data::EpochSet;
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RATE: f64 = 256.0;

fn sinusoid(freq: f64, n: usize, amplitude: f64) -> Vec<f64> {
    (0..n)
        .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / RATE).sin())
        .collect()
}

#[test]
fn alpha_tone_concentrates_power_in_alpha_band() {
    let x = sinusoid(10.0, 512, 2.0);
    let alpha = band_power(&x, ALPHA_BAND_HZ, RATE).unwrap();
    let gamma = band_power(&x, GAMMA_BAND_HZ, RATE).unwrap();
    assert!(
        alpha / gamma > 100.0,
        "alpha/gamma ratio {} too small",
        alpha / gamma
    );
}

#[test]
fn total_power_matches_variance() {
    // Multi-tone signal with an integer number of cycles per component, so
    // the sample variance is a clean sum of per-tone powers.
    let n = 2048;
    let mut x = vec![0.0; n];
    for (freq, amp) in [(8.0, 3.0), (40.0, 1.5), (97.0, 0.7)] {
        for (v, s) in x.iter_mut().zip(sinusoid(freq, n, amp)) {
            *v += s;
        }
    }
    let variance = {
        let m = x.iter().sum::<f64>() / n as f64;
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64
    };
    let (freqs, power) = periodogram(&x, RATE).unwrap();
    let total: f64 = freqs
        .iter()
        .zip(&power)
        .filter(|(&f, _)| f > 0.0 && f < RATE / 2.0)
        .map(|(_, &p)| p)
        .sum();
    let rel = (total - variance).abs() / variance;
    assert!(rel < 0.01, "relative mismatch {rel}");
}

#[test]
fn feature_layout_is_alpha_block_then_gamma_block() {
    // Channel 0 carries a 10 Hz tone, channel 1 a 40 Hz tone.
    let n_t = 256;
    let mut epochs = Array3::zeros((2, 2, n_t));
    for trial in 0..2 {
        for (i, v) in sinusoid(10.0, n_t, 5.0).into_iter().enumerate() {
            epochs[[trial, 0, i]] = v + 0.001 * (i as f64).sin();
        }
        for (i, v) in sinusoid(40.0, n_t, 5.0).into_iter().enumerate() {
            epochs[[trial, 1, i]] = v + 0.001 * (i as f64).cos();
        }
    }
    let es = EpochSet {
        subject_id: 0,
        rate_hz: RATE,
        channels: vec!["O1".into(), "O2".into()],
        epochs,
        labels: vec![0, 1],
        window_ms: (-200.0, 800.0),
        class_values_cpd: vec![0.05, 0.1],
    };
    let f = band_power_features(&es).unwrap();
    assert_eq!(f.dim(), (2, 4));
    // Alpha block: channel 0 dominates; gamma block: channel 1 dominates.
    assert!(f[[0, 0]] > f[[0, 1]] + 2.0);
    assert!(f[[0, 3]] > f[[0, 2]] + 2.0);
    // Log alpha power of the tone channel exceeds its own log gamma power.
    assert!(f[[0, 0]] > f[[0, 2]] + 2.0);
}

fn blob_features(
    n_per_class: usize,
    means: &[[f64; 4]],
    noise: f64,
    seed: u64,
) -> (Array2<f64>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_per_class * means.len();
    let mut x = Array2::zeros((n, 4));
    let mut labels = Vec::with_capacity(n);
    for (k, mean) in means.iter().enumerate() {
        for i in 0..n_per_class {
            let row = k * n_per_class + i;
            for j in 0..4 {
                x[[row, j]] = mean[j] + noise * rng.gen_range(-1.0..1.0);
            }
            labels.push(k as u32);
        }
    }
    (x, labels)
}

const BLOB_MEANS: [[f64; 4]; 3] = [
    [0.0, 0.0, 1.0, -1.0],
    [10.0, 0.0, 1.0, -1.0],
    [0.0, 10.0, 1.0, -1.0],
];

#[test]
fn widely_separated_blobs_are_classified_perfectly() {
    let (train_x, train_y) = blob_features(40, &BLOB_MEANS, 1.0, 11);
    let (test_x, test_y) = blob_features(40, &BLOB_MEANS, 1.0, 12);
    let model = svm_fit(&train_x, &train_y, 1.0).unwrap();
    let preds = svm_predict(&model, &test_x);
    let correct = preds.iter().zip(&test_y).filter(|(p, t)| p == t).count();
    assert_eq!(correct, test_y.len());
}

#[test]
fn permuted_labels_give_chance_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 300;
    let mut x = Array2::zeros((2 * n, 6));
    for v in x.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let labels: Vec<u32> = (0..2 * n).map(|_| rng.gen_range(0..3u32)).collect();
    let train_x = x.slice(ndarray::s![..n, ..]).to_owned();
    let test_x = x.slice(ndarray::s![n.., ..]).to_owned();
    let model = svm_fit(&train_x, &labels[..n], 1.0).unwrap();
    let preds = svm_predict(&model, &test_x);
    let correct = preds
        .iter()
        .zip(&labels[n..])
        .filter(|(p, t)| p == t)
        .count();
    let acc = correct as f64 / n as f64;
    assert!(
        (acc - 1.0 / 3.0).abs() <= 0.1,
        "held-out accuracy {acc} not at chance"
    );
}

#[test]
fn duplicating_every_training_point_leaves_the_decision_unchanged() {
    let (x, y) = blob_features(15, &BLOB_MEANS, 2.5, 31);
    let mut x2 = Array2::zeros((2 * x.nrows(), x.ncols()));
    x2.slice_mut(ndarray::s![..x.nrows(), ..]).assign(&x);
    x2.slice_mut(ndarray::s![x.nrows().., ..]).assign(&x);
    let mut y2 = y.clone();
    y2.extend_from_slice(&y);

    // The objective averages the hinge term, so uniform duplication leaves
    // the optimization problem (and the deterministic trajectory) intact.
    let m1 = svm_fit(&x, &y, 1.0).unwrap();
    let m2 = svm_fit(&x2, &y2, 1.0).unwrap();
    let max_w_diff = m1
        .weights
        .iter()
        .zip(m2.weights.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_w_diff < 1e-6, "weight drift {max_w_diff}");

    let (probe, _) = blob_features(30, &BLOB_MEANS, 3.0, 32);
    assert_eq!(svm_predict(&m1, &probe), svm_predict(&m2, &probe));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    // Standardization absorbs any per-feature rescaling applied before
    // fitting, so predictions are invariant to it.
    #[test]
    fn predictions_invariant_to_feature_scaling(
        seed in 0u64..1000,
        scales in proptest::collection::vec(-3.0f64..3.0, 4),
    ) {
        let (x, y) = blob_features(12, &BLOB_MEANS, 2.0, seed);
        let mut scaled = x.clone();
        for (j, &log_scale) in scales.iter().enumerate() {
            let s = 10f64.powf(log_scale);
            for i in 0..scaled.nrows() {
                scaled[[i, j]] *= s;
            }
        }
        let m1 = svm_fit(&x, &y, 1.0).unwrap();
        let m2 = svm_fit(&scaled, &y, 1.0).unwrap();

        let (probe, _) = blob_features(20, &BLOB_MEANS, 3.0, seed + 5000);
        let mut probe_scaled = probe.clone();
        for (j, &log_scale) in scales.iter().enumerate() {
            let s = 10f64.powf(log_scale);
            for i in 0..probe_scaled.nrows() {
                probe_scaled[[i, j]] *= s;
            }
        }
        prop_assert_eq!(svm_predict(&m1, &probe), svm_predict(&m2, &probe_scaled));
    }
}
