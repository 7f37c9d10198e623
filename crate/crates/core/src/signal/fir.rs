//! Linear-phase FIR design (Hamming windowed sinc) and application.
//!
//! Filters are one-pass with group-delay compensation, so output is
//! time-aligned with input and event indices stay valid. Application is
//! FFT convolution with symmetric edge padding; output length equals
//! input length.

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::data::Recording;
use crate::error::{Error, Result};

/// Hamming main-lobe factor: transition width ≈ `HAMMING_TRANSITION / N`
/// of the sample rate for an N-tap window.
const HAMMING_TRANSITION: f64 = 3.3;

/// Designs needing more taps than this are rejected.
const MAX_TAPS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    BandPass,
    BandStop,
}

/// Symmetric odd-length FIR filter tied to its design rate.
#[derive(Debug, Clone)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub kind: FilterKind,
    pub band_edges_hz: (f64, f64),
    /// Transition width at the (low, high) edge respectively.
    pub transition_hz: (f64, f64),
    pub design_rate_hz: f64,
}

impl FirFilter {
    pub fn n_taps(&self) -> usize {
        self.taps.len()
    }

    /// Integer group delay in samples: (N−1)/2.
    pub fn group_delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Magnitude response at `f_hz` by direct DFT of the taps.
    pub fn response_mag(&self, f_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / self.design_rate_hz;
        let (mut re, mut im) = (0.0, 0.0);
        for (k, &h) in self.taps.iter().enumerate() {
            re += h * (w * k as f64).cos();
            im -= h * (w * k as f64).sin();
        }
        (re * re + im * im).sqrt()
    }

    /// Magnitude response in dB; −inf for exact zeros.
    pub fn response_db(&self, f_hz: f64) -> f64 {
        20.0 * self.response_mag(f_hz).log10()
    }
}

/// Centered ideal-lowpass taps under a Hamming window, unit DC gain.
fn lowpass_taps(cutoff_hz: f64, n: usize, rate_hz: f64) -> Vec<f64> {
    debug_assert!(n % 2 == 1);
    let m = (n - 1) as f64 / 2.0;
    let fc = cutoff_hz / rate_hz;
    let mut h: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 - m;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * t).sin() / (std::f64::consts::PI * t)
            };
            let w = 0.54
                - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / (n as f64 - 1.0)).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Odd tap count for a requested transition width.
fn taps_for_transition(transition_hz: f64, rate_hz: f64) -> Result<usize> {
    let n = (HAMMING_TRANSITION * rate_hz / transition_hz).ceil() as usize;
    let n = if n % 2 == 0 { n + 1 } else { n };
    let n = n.max(3);
    if n > MAX_TAPS {
        return Err(Error::InvalidArgument(format!(
            "transition width {transition_hz} Hz needs {n} taps (cap {MAX_TAPS})"
        )));
    }
    Ok(n)
}

/// Anti-alias low-pass for decimation to `target_rate_hz`: cutoff at
/// 0.45 × the target rate with a transition of 0.1 × the target rate, so
/// the stopband begins exactly at the new Nyquist frequency.
pub(crate) fn lowpass_taps_for_rate(
    target_rate_hz: f64,
    design_rate_hz: f64,
) -> Result<Vec<f64>> {
    let n = taps_for_transition(0.1 * target_rate_hz, design_rate_hz)?;
    Ok(lowpass_taps(0.45 * target_rate_hz, n, design_rate_hz))
}

/// Pad symmetric odd-length taps with zeros on both sides to length `l`.
fn pad_centered(taps: &[f64], l: usize) -> Vec<f64> {
    let extra = (l - taps.len()) / 2;
    let mut out = vec![0.0; l];
    out[extra..extra + taps.len()].copy_from_slice(taps);
    out
}

/// Design a band-pass or band-stop filter.
///
/// Cutoffs sit exactly at the band edges (−6 dB points); each edge's
/// transition is centered on it, so the passband interior starts half a
/// transition inside and the stopband half a transition outside.
pub fn design_windowed_sinc(
    kind: FilterKind,
    band_edges_hz: (f64, f64),
    transition_hz: (f64, f64),
    rate_hz: f64,
) -> Result<FirFilter> {
    let (low, high) = band_edges_hz;
    let (t_lo, t_hi) = transition_hz;
    let nyquist = rate_hz / 2.0;
    if !(0.0 < low && low < high && high < nyquist) {
        return Err(Error::InvalidArgument(format!(
            "infeasible band edges ({low}, {high}) Hz at rate {rate_hz} Hz"
        )));
    }
    if t_lo <= 0.0 || t_hi <= 0.0 {
        return Err(Error::InvalidArgument(
            "transition widths must be positive".into(),
        ));
    }
    // A low-edge transition may touch DC (the lower stopband just
    // vanishes), but the upper transition must stay below Nyquist.
    if high + t_hi / 2.0 > nyquist {
        return Err(Error::InvalidArgument(format!(
            "upper edge {high} Hz + transition {t_hi}/2 exceeds Nyquist {nyquist} Hz"
        )));
    }
    let n_lo = taps_for_transition(t_lo, rate_hz)?;
    let n_hi = taps_for_transition(t_hi, rate_hz)?;
    let l = n_lo.max(n_hi);
    let lp_low = pad_centered(&lowpass_taps(low, n_lo, rate_hz), l);
    let lp_high = pad_centered(&lowpass_taps(high, n_hi, rate_hz), l);
    // Band-pass = LP(high) − LP(low); band-stop = δ − band-pass.
    let mut taps: Vec<f64> = lp_high
        .iter()
        .zip(&lp_low)
        .map(|(h, l)| h - l)
        .collect();
    if kind == FilterKind::BandStop {
        for v in &mut taps {
            *v = -*v;
        }
        taps[(l - 1) / 2] += 1.0;
    }
    Ok(FirFilter {
        taps,
        kind,
        band_edges_hz,
        transition_hz,
        design_rate_hz: rate_hz,
    })
}

/// Full linear convolution via FFT: output length `x.len() + h.len() − 1`.
pub(crate) fn fft_convolve_full(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let fft_len = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let mut xa: Vec<Complex<f64>> = x
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    let mut ha: Vec<Complex<f64>> = h
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    fwd.process(&mut xa);
    fwd.process(&mut ha);
    for (a, b) in xa.iter_mut().zip(&ha) {
        *a *= b;
    }
    inv.process(&mut xa);
    let scale = 1.0 / fft_len as f64;
    xa[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Filter one channel: symmetric (reflect) edge padding by the group
/// delay, convolve, and re-align so `y[i]` corresponds to `x[i]`.
pub(crate) fn filter_channel(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() - 1) / 2;
    let n = x.len();
    let mut padded = Vec::with_capacity(n + 2 * half);
    // Reflect around the first/last sample (the edge value itself is not
    // repeated); degenerate inputs shorter than the pad reflect cyclically.
    for i in 0..half {
        let k = half - i;
        padded.push(x[reflect_index(k as isize, n)]);
    }
    padded.extend_from_slice(x);
    for i in 0..half {
        let k = n as isize - 2 - i as isize;
        padded.push(x[reflect_index(k, n)]);
    }
    let full = fft_convolve_full(&padded, taps);
    full[taps.len() - 1..taps.len() - 1 + n].to_vec()
}

/// Reflect an out-of-range index into [0, n).
fn reflect_index(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Apply a filter to every channel of a recording.
pub fn apply_fir(rec: &Recording, f: &FirFilter) -> Result<Recording> {
    if (f.design_rate_hz - rec.rate_hz).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "filter designed at {} Hz applied to {} Hz recording",
            f.design_rate_hz, rec.rate_hz
        )));
    }
    let mut out = Array2::zeros(rec.samples.raw_dim());
    for (ch, row) in rec.samples.outer_iter().enumerate() {
        let x: Vec<f64> = row.to_vec();
        let y = filter_channel(&x, &f.taps);
        out.row_mut(ch).assign(&ndarray::ArrayView1::from(&y));
    }
    Ok(Recording {
        subject_id: rec.subject_id,
        rate_hz: rec.rate_hz,
        channels: rec.channels.clone(),
        samples: out,
        events: rec.events.clone(),
        class_values_cpd: rec.class_values_cpd.clone(),
    })
}
