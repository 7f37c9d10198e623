//! Comparison classifier: log band-power features (alpha and gamma per
//! channel, computed over the post-stimulus second) fed to a one-vs-rest
//! linear max-margin classifier trained by deterministic full-batch
//! subgradient descent.

use ndarray::{Array1, Array2};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::data::EpochSet;
use crate::error::{Error, Result};

pub const ALPHA_BAND_HZ: (f64, f64) = (8.0, 12.0);
pub const GAMMA_BAND_HZ: (f64, f64) = (30.0, 80.0);
/// Post-stimulus window the features are computed over, ms relative to
/// stimulus onset.
pub const POWER_WINDOW_MS: (f64, f64) = (0.0, 800.0);

/// One-sided Hann periodogram. Returns `(frequencies, power)` where the
/// power entries sum (over k ≥ 0) to the window-weighted mean square of
/// the signal, so summing over a band reads as the power in that band.
pub fn periodogram(x: &[f64], rate_hz: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "periodogram needs at least 2 samples".into(),
        ));
    }
    if rate_hz <= 0.0 {
        return Err(Error::InvalidArgument("sampling rate must be positive".into()));
    }
    let window: Vec<f64> = (0..n)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64;
            0.5 * (1.0 - t.cos())
        })
        .collect();
    let w_energy: f64 = window.iter().map(|&w| w * w).sum();

    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .zip(&window)
        .map(|(&v, &w)| Complex::new(v * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let n_bins = n / 2 + 1;
    let mut freqs = Vec::with_capacity(n_bins);
    let mut power = Vec::with_capacity(n_bins);
    for (k, bin) in buf.iter().take(n_bins).enumerate() {
        let two_sided = bin.norm_sqr() / (n as f64 * w_energy);
        let fold = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else {
            2.0
        };
        freqs.push(k as f64 * rate_hz / n as f64);
        power.push(fold * two_sided);
    }
    Ok((freqs, power))
}

/// Mean periodogram power density over `band_hz` (power per Hz) for the
/// given samples. The caller supplies the slice already restricted to the
/// analysis window.
pub fn band_power(x: &[f64], band_hz: (f64, f64), rate_hz: f64) -> Result<f64> {
    let (lo, hi) = band_hz;
    if !(lo > 0.0 && lo < hi && hi < rate_hz / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "band {lo}-{hi} Hz outside (0, {}) Hz",
            rate_hz / 2.0
        )));
    }
    let (freqs, power) = periodogram(x, rate_hz)?;
    let total: f64 = freqs
        .iter()
        .zip(&power)
        .filter(|(&f, _)| f >= lo && f <= hi)
        .map(|(_, &p)| p)
        .sum();
    Ok(total / (hi - lo))
}

/// Log alpha/gamma band power per channel over the post-stimulus window:
/// one row per trial, alpha block (all channels) then gamma block.
pub fn band_power_features(es: &EpochSet) -> Result<Array2<f64>> {
    let rate = es.rate_hz;
    let n_time = es.n_time();
    let rel = |ms: f64| ((ms - es.window_ms.0) / 1000.0 * rate).round() as i64;
    let start = rel(POWER_WINDOW_MS.0).clamp(0, n_time as i64) as usize;
    let stop = rel(POWER_WINDOW_MS.1).clamp(0, n_time as i64) as usize;
    if stop.saturating_sub(start) < 2 {
        return Err(Error::InvalidArgument(format!(
            "post-stimulus window {:?} ms does not overlap trials at {:?} ms",
            POWER_WINDOW_MS, es.window_ms
        )));
    }

    let n_c = es.n_channels();
    let mut out = Array2::zeros((es.n_trials(), 2 * n_c));
    for i in 0..es.n_trials() {
        for c in 0..n_c {
            let seg: Vec<f64> = es
                .epochs
                .slice(ndarray::s![i, c, start..stop])
                .iter()
                .cloned()
                .collect();
            for (j, band) in [ALPHA_BAND_HZ, GAMMA_BAND_HZ].iter().enumerate() {
                let p = band_power(&seg, *band, rate)?;
                if !(p.is_finite() && p > 0.0) {
                    return Err(Error::Stats(format!(
                        "non-positive band power in trial {i} channel {c}"
                    )));
                }
                out[[i, j * n_c + c]] = p.ln();
            }
        }
    }
    Ok(out)
}

/// Per-feature standardization fit on training data only. Features whose
/// training variance is zero are dropped and recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Indices of retained features (variance > 0) in the raw layout.
    pub kept: Vec<usize>,
    /// Indices of dropped zero-variance features.
    pub dropped: Vec<usize>,
}

impl Standardizer {
    pub fn fit(features: &Array2<f64>) -> Result<Standardizer> {
        let (n, f) = features.dim();
        if n == 0 {
            return Err(Error::InvalidArgument("no rows to standardize".into()));
        }
        let mut mean = Vec::with_capacity(f);
        let mut std = Vec::with_capacity(f);
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for j in 0..f {
            let col: Vec<f64> = features.column(j).to_vec();
            let m = crate::util::mean(&col);
            let s = crate::util::std_pop(&col);
            if s > 0.0 {
                kept.push(j);
                mean.push(m);
                std.push(s);
            } else {
                dropped.push(j);
            }
        }
        if kept.is_empty() {
            return Err(Error::Stats("every feature has zero variance".into()));
        }
        Ok(Standardizer {
            mean,
            std,
            kept,
            dropped,
        })
    }

    pub fn transform(&self, features: &Array2<f64>) -> Array2<f64> {
        let n = features.nrows();
        let mut out = Array2::zeros((n, self.kept.len()));
        for i in 0..n {
            for (jj, &j) in self.kept.iter().enumerate() {
                out[[i, jj]] = (features[[i, j]] - self.mean[jj]) / self.std[jj];
            }
        }
        out
    }
}

/// One-vs-rest linear classifier with the standardization baked in.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    /// `[n_classes, n_kept_features]` weights on standardized features.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub c: f64,
    pub standardizer: Standardizer,
    pub classes: Vec<u32>,
}

/// Regularized mean hinge objective for one one-vs-rest problem:
/// `J(w, b) = 0.5/C·‖w‖² + mean_i max(0, 1 − y_i(w·x_i + b))`.
fn objective(x: &Array2<f64>, y: &[f64], w: &Array1<f64>, b: f64, c: f64) -> f64 {
    let reg = 0.5 / c * w.dot(w);
    let n = x.nrows();
    let mut hinge = 0.0;
    for i in 0..n {
        let margin = y[i] * (x.row(i).dot(w) + b);
        hinge += (1.0 - margin).max(0.0);
    }
    reg + hinge / n as f64
}

/// Full-batch subgradient descent on the objective above, from zero
/// weights, with a 1/t step size; stops at relative objective change
/// below `tol` or the iteration cap. Deterministic.
fn fit_binary(x: &Array2<f64>, y: &[f64], c: f64, tol: f64) -> (Array1<f64>, f64) {
    let (n, f) = x.dim();
    let lambda = 1.0 / c;
    let mut w = Array1::zeros(f);
    let mut b = 0.0;
    let mut prev = objective(x, y, &w, b, c);
    for t in 1..=50_000usize {
        let mut gw = &w * lambda;
        let mut gb = 0.0;
        for i in 0..n {
            let margin = y[i] * (x.row(i).dot(&w) + b);
            if margin < 1.0 {
                gw.scaled_add(-y[i] / n as f64, &x.row(i));
                gb -= y[i] / n as f64;
            }
        }
        let eta = 1.0 / (lambda * (t as f64 + 1.0));
        w.scaled_add(-eta, &gw);
        b -= eta * gb;
        let j = objective(x, y, &w, b, c);
        if (prev - j).abs() / prev.abs().max(1e-12) < tol {
            break;
        }
        prev = j;
    }
    (w, b)
}

/// Fit one-vs-rest linear classifiers on standardized features.
pub fn svm_fit(features: &Array2<f64>, labels: &[u32], c: f64) -> Result<LinearSvmModel> {
    let n = features.nrows();
    if n == 0 || labels.len() != n {
        return Err(Error::Shape {
            context: "svm_fit",
            msg: format!("{n} rows, {} labels", labels.len()),
        });
    }
    if c <= 0.0 {
        return Err(Error::InvalidArgument("C must be positive".into()));
    }
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(
            "training set contains a single class".into(),
        ));
    }

    let standardizer = Standardizer::fit(features)?;
    let x = standardizer.transform(features);
    let f = x.ncols();
    let mut weights = Array2::zeros((classes.len(), f));
    let mut bias = Array1::zeros(classes.len());
    for (k, &class) in classes.iter().enumerate() {
        let y: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let (w, b) = fit_binary(&x, &y, c, 1e-6);
        weights.row_mut(k).assign(&w);
        bias[k] = b;
    }
    Ok(LinearSvmModel {
        weights,
        bias,
        c,
        standardizer,
        classes,
    })
}

/// Predicted labels: argmax of per-class scores, ties to the lowest class
/// index.
pub fn svm_predict(model: &LinearSvmModel, features: &Array2<f64>) -> Vec<u32> {
    let x = model.standardizer.transform(features);
    let n = x.nrows();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..model.classes.len() {
            let score = x.row(i).dot(&model.weights.row(k)) + model.bias[k];
            if score > best_score {
                best_score = score;
                best = k;
            }
        }
        out.push(model.classes[best]);
    }
    out
}
