//! Synthetic EEG generator with a known ground truth: class-dependent
//! evoked components and oscillatory bursts on top of 1/f background
//! noise, projected through a per-subject scalp topography.
//!
//! Everything is driven by explicit per-subject profiles so studies are
//! reproducible and generator invariants (component timing, amplitude
//! encoding, band-power monotonicity) can be tested directly.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::data::{Event, EpochSet, Recording, DEFAULT_CLASS_VALUES_CPD, DEFAULT_MODEL_CHANNELS};
use crate::error::{Error, Result};
use crate::util::mix_seed;

pub const N_CLASSES: usize = 3;
pub const N_CHANNELS: usize = 9;

/// Epoch window relative to stimulus onset, ms.
pub const EPOCH_WINDOW_MS: (f64, f64) = (-200.0, 800.0);

pub const P1_CENTER_MS: f64 = 150.0;
pub const P1_SIGMA_MS: f64 = 30.0;
pub const P2_CENTER_MS: f64 = 270.0;
pub const P2_SIGMA_MS: f64 = 45.0;
pub const ALPHA_FREQ_HZ: f64 = 10.0;
pub const GAMMA_FREQ_HZ: f64 = 40.0;
/// Trial-to-trial latency jitter applied to every evoked component.
pub const LATENCY_JITTER_STD_MS: f64 = 7.0;
/// Burst envelope centers and widths, ms.
const ALPHA_ENV_CENTER_MS: f64 = 450.0;
const ALPHA_ENV_SIGMA_MS: f64 = 120.0;
const GAMMA_ENV_CENTER_MS: f64 = 300.0;
const GAMMA_ENV_SIGMA_MS: f64 = 80.0;
/// Burst peak amplitude at gain 1, microvolts.
const ALPHA_BASE_UV: f64 = 2.0;
const GAMMA_BASE_UV: f64 = 1.2;

/// Ground truth for one simulated subject. All evoked amplitudes are in
/// microvolts at the source; channel values are scaled by
/// `amplitude_scale * topography[channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectProfile {
    pub subject_id: u32,
    pub seed: u64,
    /// Per-class P1 peak amplitude.
    pub p1_amplitude_uv: [f64; N_CLASSES],
    /// Per-class P2 peak amplitude.
    pub p2_amplitude_uv: [f64; N_CLASSES],
    /// Per-class multiplicative gain on the post-stimulus alpha burst.
    pub alpha_gain: [f64; N_CLASSES],
    /// Per-class multiplicative gain on the post-stimulus gamma burst.
    pub gamma_gain: [f64; N_CLASSES],
    /// Subject-wide scale on all evoked components.
    pub amplitude_scale: f64,
    /// Subject-wide mean latency shift, ms (trial jitter is added on top).
    pub latency_offset_ms: f64,
    /// Per-class latency shift of the whole evoked response, ms. Within a
    /// subject this is a stable timing code; across subjects it may vary.
    pub class_latency_ms: [f64; N_CLASSES],
    /// RMS of the 1/f background noise per channel, microvolts.
    pub noise_level_uv: f64,
    /// Projection weight of the evoked signal into each channel, in [0, 1],
    /// ordered like the default model montage.
    pub topography: [f64; N_CHANNELS],
}

impl SubjectProfile {
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.amplitude_scale) || !finite_pos(self.noise_level_uv) {
            return Err(Error::InvalidArgument(
                "amplitude scale and noise level must be positive".into(),
            ));
        }
        if !self.latency_offset_ms.is_finite() || self.latency_offset_ms.abs() > 50.0 {
            return Err(Error::InvalidArgument(
                "latency offset must be finite and within ±50 ms".into(),
            ));
        }
        for l in &self.class_latency_ms {
            if !l.is_finite() || l.abs() > 40.0 {
                return Err(Error::InvalidArgument(
                    "class latency shifts must be finite and within ±40 ms".into(),
                ));
            }
        }
        for g in self.alpha_gain.iter().chain(&self.gamma_gain) {
            if !(g.is_finite() && *g >= 0.0) {
                return Err(Error::InvalidArgument("band gains must be ≥ 0".into()));
            }
        }
        for w in &self.topography {
            if !(w.is_finite() && (0.0..=1.0).contains(w)) {
                return Err(Error::InvalidArgument(
                    "topography weights must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Unit-RMS 1/f noise: white Gaussian half-spectrum shaped by
/// 1/sqrt(f) amplitude (power exponent 1), symmetrized, inverted.
fn pink_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    assert!(n >= 4);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 1..=n / 2 {
        // Shape by 1/sqrt(k): power falls as 1/f independent of rate.
        let scale = 1.0 / (k as f64).sqrt();
        let re = normal.sample(rng) * scale;
        let im = if k == n / 2 && n % 2 == 0 {
            0.0
        } else {
            normal.sample(rng) * scale
        };
        spec[k] = Complex::new(re, im);
        if k != n - k {
            spec[n - k] = Complex::new(re, -im);
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let raw: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let rms = (raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    raw.iter().map(|v| (v - mean) / rms).collect()
}

fn gauss(t_ms: f64, center_ms: f64, sigma_ms: f64) -> f64 {
    let z = (t_ms - center_ms) / sigma_ms;
    (-0.5 * z * z).exp()
}

/// Per-trial stochastic parameters, drawn from a stream independent of
/// the trial count so trial `i` is identical for any `n_trials > i`.
struct TrialDraw {
    jitter_ms: f64,
    alpha_phase: f64,
    gamma_phase: f64,
}

fn trial_draw(profile: &SubjectProfile, trial: usize) -> (TrialDraw, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(profile.seed, &[0x51, trial as u64]));
    let normal = Normal::new(profile.latency_offset_ms, LATENCY_JITTER_STD_MS).unwrap();
    let draw = TrialDraw {
        jitter_ms: normal.sample(&mut rng),
        alpha_phase: rng.gen_range(0.0..std::f64::consts::TAU),
        gamma_phase: rng.gen_range(0.0..std::f64::consts::TAU),
    };
    (draw, rng)
}

/// Evoked source waveform for one trial at time `t_ms` post-stimulus.
fn evoked(profile: &SubjectProfile, class: usize, draw: &TrialDraw, t_ms: f64) -> f64 {
    let t = t_ms - draw.jitter_ms - profile.class_latency_ms[class];
    let mut v = profile.p1_amplitude_uv[class] * gauss(t, P1_CENTER_MS, P1_SIGMA_MS)
        + profile.p2_amplitude_uv[class] * gauss(t, P2_CENTER_MS, P2_SIGMA_MS);
    let alpha_env = gauss(t, ALPHA_ENV_CENTER_MS, ALPHA_ENV_SIGMA_MS);
    let gamma_env = gauss(t, GAMMA_ENV_CENTER_MS, GAMMA_ENV_SIGMA_MS);
    v += profile.alpha_gain[class]
        * ALPHA_BASE_UV
        * alpha_env
        * (std::f64::consts::TAU * ALPHA_FREQ_HZ * t / 1000.0 + draw.alpha_phase).sin();
    v += profile.gamma_gain[class]
        * GAMMA_BASE_UV
        * gamma_env
        * (std::f64::consts::TAU * GAMMA_FREQ_HZ * t / 1000.0 + draw.gamma_phase).sin();
    v * profile.amplitude_scale
}

/// Near-equal class labels in a seeded shuffled order.
fn trial_labels(profile: &SubjectProfile, n_trials: usize) -> Vec<u32> {
    let mut labels: Vec<u32> = (0..n_trials).map(|i| (i % N_CLASSES) as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(profile.seed, &[0x5A]));
    for i in (1..labels.len()).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }
    labels
}

/// Generate epoched trials directly at the given rate, windowed
/// `EPOCH_WINDOW_MS` around stimulus onset.
pub fn generate_subject(
    profile: &SubjectProfile,
    n_trials: usize,
    rate_hz: f64,
) -> Result<EpochSet> {
    profile.validate()?;
    if n_trials < N_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "need at least {N_CLASSES} trials, got {n_trials}"
        )));
    }
    if rate_hz < 120.0 {
        return Err(Error::InvalidArgument(
            "synthesis rate must resolve the gamma burst (≥ 120 Hz)".into(),
        ));
    }
    let n_time = ((EPOCH_WINDOW_MS.1 - EPOCH_WINDOW_MS.0) / 1000.0 * rate_hz).round() as usize;
    let labels = trial_labels(profile, n_trials);
    let mut epochs = Array3::zeros((n_trials, N_CHANNELS, n_time));
    for trial in 0..n_trials {
        let class = labels[trial] as usize;
        let (draw, mut rng) = trial_draw(profile, trial);
        let source: Vec<f64> = (0..n_time)
            .map(|i| {
                let t_ms = EPOCH_WINDOW_MS.0 + i as f64 / rate_hz * 1000.0;
                evoked(profile, class, &draw, t_ms)
            })
            .collect();
        for c in 0..N_CHANNELS {
            let noise = pink_noise(&mut rng, n_time);
            // `evoked` already applies amplitude_scale; topography here.
            for i in 0..n_time {
                epochs[[trial, c, i]] =
                    profile.topography[c] * source[i] + profile.noise_level_uv * noise[i];
            }
        }
    }
    Ok(EpochSet {
        subject_id: profile.subject_id,
        rate_hz,
        channels: DEFAULT_MODEL_CHANNELS.iter().map(|s| s.to_string()).collect(),
        epochs,
        labels,
        window_ms: EPOCH_WINDOW_MS,
        class_values_cpd: DEFAULT_CLASS_VALUES_CPD.to_vec(),
    })
}

/// Generate a continuous recording with stimulus events, for exercising
/// the filtering / downsampling / epoching pipeline end to end. Trial
/// content (labels, jitter, phases) matches `generate_subject` for the
/// same profile; the background noise stream is continuous rather than
/// per-epoch.
pub fn generate_subject_continuous(
    profile: &SubjectProfile,
    n_trials: usize,
    rate_hz: f64,
) -> Result<Recording> {
    profile.validate()?;
    if n_trials < N_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "need at least {N_CLASSES} trials, got {n_trials}"
        )));
    }
    if rate_hz < 120.0 {
        return Err(Error::InvalidArgument(
            "synthesis rate must resolve the gamma burst (≥ 120 Hz)".into(),
        ));
    }
    let labels = trial_labels(profile, n_trials);
    let mut isi_rng = ChaCha8Rng::seed_from_u64(mix_seed(profile.seed, &[0x151]));
    let lead_ms = 2000.0;
    let mut onsets_ms = Vec::with_capacity(n_trials);
    let mut t = lead_ms;
    for _ in 0..n_trials {
        onsets_ms.push(t);
        t += isi_rng.gen_range(1200.0..1600.0);
    }
    let total_ms = t + 2000.0;
    let n_samples = (total_ms / 1000.0 * rate_hz).ceil() as usize;

    let mut samples = Array2::zeros((N_CHANNELS, n_samples));
    let mut bg_rng = ChaCha8Rng::seed_from_u64(mix_seed(profile.seed, &[0xB6]));
    for c in 0..N_CHANNELS {
        let noise = pink_noise(&mut bg_rng, n_samples);
        for i in 0..n_samples {
            samples[[c, i]] = profile.noise_level_uv * noise[i];
        }
    }
    let mut events = Vec::with_capacity(n_trials);
    for trial in 0..n_trials {
        let class = labels[trial] as usize;
        let (draw, _) = trial_draw(profile, trial);
        let onset_sample = (onsets_ms[trial] / 1000.0 * rate_hz).round() as usize;
        events.push(Event {
            sample_index: onset_sample as u64,
            label: labels[trial],
        });
        // Evoked support: [-50, 850] ms around onset covers every component.
        let lo = onset_sample.saturating_sub((0.05 * rate_hz) as usize);
        let hi = (onset_sample + (0.85 * rate_hz) as usize).min(n_samples);
        for i in lo..hi {
            let t_ms = (i as f64 - onset_sample as f64) / rate_hz * 1000.0;
            let v = evoked(profile, class, &draw, t_ms);
            for c in 0..N_CHANNELS {
                samples[[c, i]] += profile.topography[c] * v;
            }
        }
    }
    Ok(Recording {
        subject_id: profile.subject_id,
        rate_hz,
        channels: DEFAULT_MODEL_CHANNELS.iter().map(|s| s.to_string()).collect(),
        samples,
        events,
        class_values_cpd: DEFAULT_CLASS_VALUES_CPD.to_vec(),
    })
}

/// Cohort-level generation knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortConfig {
    pub n_subjects: usize,
    pub n_trials_per_subject: usize,
    /// Scales the class-discriminative spread of every component; 0 makes
    /// classes indistinguishable, 1 is the calibrated default.
    pub separability: f64,
    /// Scales between-subject distribution shift; 0 draws every subject
    /// from one shared distribution, larger values move amplitudes,
    /// latencies, gains and topographies apart.
    pub inter_subject_shift: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_subjects: 10,
            n_trials_per_subject: 300,
            separability: 1.0,
            inter_subject_shift: 1.0,
            seed: 0,
        }
    }
}

/// Base class structure at separability 1: per-class deltas around the
/// component means.
const P1_MEAN_UV: f64 = 8.0;
const P1_DELTA_UV: [f64; N_CLASSES] = [-0.5, 0.0, 0.5];
const P2_MEAN_UV: f64 = 5.5;
const P2_DELTA_UV: [f64; N_CLASSES] = [0.45, 0.0, -0.45];
const ALPHA_GAIN_DELTA: [f64; N_CLASSES] = [0.2, 0.0, -0.15];
const GAMMA_GAIN_DELTA: [f64; N_CLASSES] = [-0.18, 0.0, 0.21];
const BASE_TOPOGRAPHY: [f64; N_CHANNELS] = [0.45, 0.45, 0.3, 0.3, 0.7, 0.7, 0.95, 1.0, 0.95];
const NOISE_MEAN_UV: f64 = 1.4;
const CLASS_LATENCY_DELTA_MS: [f64; N_CLASSES] = [-28.0, 0.0, 28.0];

/// Draw per-subject ground-truth profiles from the cohort prior.
pub fn cohort_profiles(cfg: &CohortConfig) -> Result<Vec<SubjectProfile>> {
    if cfg.n_subjects == 0 {
        return Err(Error::InvalidArgument("cohort needs ≥ 1 subject".into()));
    }
    if !(cfg.separability.is_finite() && cfg.separability >= 0.0) {
        return Err(Error::InvalidArgument("separability must be ≥ 0".into()));
    }
    if !(cfg.inter_subject_shift.is_finite() && cfg.inter_subject_shift >= 0.0) {
        return Err(Error::InvalidArgument(
            "inter-subject shift must be ≥ 0".into(),
        ));
    }
    let s = cfg.separability;
    let h = cfg.inter_subject_shift;
    let mut profiles = Vec::with_capacity(cfg.n_subjects);
    for subject in 0..cfg.n_subjects {
        let mut rng =
            ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[0xC0_50_B1, subject as u64]));
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut draw = |std: f64| normal.sample(&mut rng) * std;

        // Transfer-hostile components scale with h; benign within-cohort
        // variability (overall scale, noise floor) does not.
        let p1_shift = draw(h * 1.2);
        let p2_shift = draw(h * 1.0);
        let alpha_shift = (draw(h * 0.15)).exp();
        let gamma_shift = (draw(h * 0.15)).exp();
        let amplitude_scale = (draw(0.12)).exp();
        let latency_offset_ms = (draw(h * 12.0)).clamp(-25.0, 25.0);
        let noise_level_uv = (NOISE_MEAN_UV + draw(0.10)).max(0.8);

        let mut p1 = [0.0; N_CLASSES];
        let mut p2 = [0.0; N_CLASSES];
        let mut alpha = [0.0; N_CLASSES];
        let mut gamma = [0.0; N_CLASSES];
        for k in 0..N_CLASSES {
            p1[k] = (P1_MEAN_UV + p1_shift + s * P1_DELTA_UV[k]).max(0.5);
            p2[k] = (P2_MEAN_UV + p2_shift + s * P2_DELTA_UV[k]).max(0.5);
            alpha[k] = (alpha_shift * (1.0 + s * ALPHA_GAIN_DELTA[k])).max(0.05);
            gamma[k] = (gamma_shift * (1.0 + s * GAMMA_GAIN_DELTA[k])).max(0.05);
        }
        let mut topography = [0.0; N_CHANNELS];
        for c in 0..N_CHANNELS {
            topography[c] = (BASE_TOPOGRAPHY[c] + draw(h * 0.38)).clamp(0.05, 1.0);
        }
        // Timing code: classes are separated in latency by a stable
        // per-subject pattern. Permuting the canonical pattern (rather
        // than perturbing it) keeps the within-subject class separation
        // intact for every subject while scrambling the class-to-latency
        // mapping across subjects, which is what breaks naive transfer.
        // At shift 0 every subject keeps the canonical mapping.
        let mut latency_noise = [0.0; N_CLASSES];
        for noise in latency_noise.iter_mut() {
            *noise = draw(h * 3.0);
        }
        let mut mapping: [usize; N_CLASSES] = [0, 1, 2];
        if rng.gen::<f64>() < h {
            for i in (1..N_CLASSES).rev() {
                let j = rng.gen_range(0..=i);
                mapping.swap(i, j);
            }
        }
        let mut class_latency_ms = [0.0; N_CLASSES];
        for k in 0..N_CLASSES {
            class_latency_ms[k] = (s
                * (CLASS_LATENCY_DELTA_MS[mapping[k]] + latency_noise[k]))
            .clamp(-36.0, 36.0);
        }
        profiles.push(SubjectProfile {
            subject_id: subject as u32,
            seed: mix_seed(cfg.seed, &[0x5EED, subject as u64]),
            p1_amplitude_uv: p1,
            p2_amplitude_uv: p2,
            alpha_gain: alpha,
            gamma_gain: gamma,
            amplitude_scale,
            latency_offset_ms,
            class_latency_ms,
            noise_level_uv,
            topography,
        });
    }
    Ok(profiles)
}

/// Generate epoched data for a whole cohort at the given rate.
pub fn generate_cohort(cfg: &CohortConfig, rate_hz: f64) -> Result<Vec<EpochSet>> {
    let profiles = cohort_profiles(cfg)?;
    profiles
        .iter()
        .map(|p| generate_subject(p, cfg.n_trials_per_subject, rate_hz))
        .collect()
}

/// A quiet single-purpose profile for generator-level tests.
pub fn test_profile(seed: u64) -> SubjectProfile {
    SubjectProfile {
        subject_id: 0,
        seed,
        p1_amplitude_uv: [5.5, 8.0, 10.5],
        p2_amplitude_uv: [7.3, 5.5, 3.7],
        alpha_gain: [1.55, 1.0, 0.6],
        gamma_gain: [0.55, 1.0, 1.55],
        amplitude_scale: 1.0,
        latency_offset_ms: 0.0,
        class_latency_ms: [0.0; N_CLASSES],
        noise_level_uv: 1.5,
        topography: BASE_TOPOGRAPHY,
    }
}
