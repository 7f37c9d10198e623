//! Ground-truth recovery checks for the synthetic generator: component
//! timing, encoded amplitude differences, and band-power monotonicity.

use eegdec::baseline::band_power;
use eegdec::synth::{
    generate_subject, generate_subject_continuous, test_profile, LATENCY_JITTER_STD_MS,
    P1_CENTER_MS, P1_SIGMA_MS, P2_CENTER_MS,
};

const RATE: f64 = 256.0;
const OZ: usize = 7;

/// Class-mean ERP at one channel.
fn class_mean(es: &eegdec::data::EpochSet, class: u32, channel: usize) -> Vec<f64> {
    let n_t = es.n_time();
    let mut acc = vec![0.0; n_t];
    let mut count = 0usize;
    for (i, &l) in es.labels.iter().enumerate() {
        if l == class {
            for t in 0..n_t {
                acc[t] += es.epochs[[i, channel, t]];
            }
            count += 1;
        }
    }
    assert!(count > 0);
    acc.iter().map(|v| v / count as f64).collect()
}

fn peak_in_window(erp: &[f64], window_ms: (f64, f64), epoch_start_ms: f64) -> (f64, f64) {
    let idx = |ms: f64| ((ms - epoch_start_ms) / 1000.0 * RATE).round() as usize;
    let (lo, hi) = (idx(window_ms.0), idx(window_ms.1));
    let mut best = (lo, f64::MIN);
    for i in lo..hi.min(erp.len()) {
        if erp[i] > best.1 {
            best = (i, erp[i]);
        }
    }
    let t_ms = epoch_start_ms + best.0 as f64 / RATE * 1000.0;
    (t_ms, best.1)
}

#[test]
fn component_peaks_land_at_their_nominal_latencies() {
    // Measure each component in isolation; with both present the overlap
    // of their tails shifts the grid argmax, which is a property of the
    // readout rather than of component placement.
    let isolated = |keep_p1: bool| {
        let mut p = test_profile(41);
        p.noise_level_uv = 0.3;
        p.alpha_gain = [0.0; 3];
        p.gamma_gain = [0.0; 3];
        if keep_p1 {
            p.p2_amplitude_uv = [0.0; 3];
        } else {
            p.p1_amplitude_uv = [0.0; 3];
        }
        generate_subject(&p, 240, RATE).unwrap()
    };

    let es = isolated(true);
    for class in 0..3u32 {
        let erp = class_mean(&es, class, OZ);
        let (t1, v1) = peak_in_window(&erp, (80.0, 220.0), es.window_ms.0);
        assert!(
            (t1 - P1_CENTER_MS).abs() <= 5.0,
            "class {class} P1 peak at {t1} ms"
        );
        assert!(v1 > 0.0);
    }
    let es = isolated(false);
    for class in 0..3u32 {
        let erp = class_mean(&es, class, OZ);
        let (t2, _) = peak_in_window(&erp, (200.0, 350.0), es.window_ms.0);
        assert!(
            (t2 - P2_CENTER_MS).abs() <= 5.0,
            "class {class} P2 peak at {t2} ms"
        );
    }
}

#[test]
fn erp_average_recovers_p1_amplitude_differences() {
    let mut p = test_profile(42);
    p.noise_level_uv = 0.8;
    let es = generate_subject(&p, 300, RATE).unwrap();

    // Trial-to-trial latency jitter attenuates the average of a Gaussian
    // bump by sigma / sqrt(sigma^2 + jitter^2); fold that known factor
    // into the expectation before comparing.
    let atten = P1_SIGMA_MS
        / (P1_SIGMA_MS * P1_SIGMA_MS + LATENCY_JITTER_STD_MS * LATENCY_JITTER_STD_MS).sqrt();
    let peaks: Vec<f64> = (0..3u32)
        .map(|class| {
            let erp = class_mean(&es, class, OZ);
            peak_in_window(&erp, (100.0, 200.0), es.window_ms.0).1
        })
        .collect();
    for (a, b) in [(2usize, 0usize), (2, 1), (1, 0)] {
        let measured = peaks[a] - peaks[b];
        let expected =
            (p.p1_amplitude_uv[a] - p.p1_amplitude_uv[b]) * p.topography[OZ] * atten;
        let rel = (measured - expected).abs() / expected.abs();
        assert!(
            rel <= 0.10,
            "classes {a}-{b}: measured {measured:.3}, expected {expected:.3}, rel {rel:.3}"
        );
    }
}

#[test]
fn alpha_band_power_is_monotone_in_alpha_gain() {
    let mut powers = Vec::new();
    for gain in [0.4, 1.0, 2.0] {
        let mut p = test_profile(43);
        p.alpha_gain = [gain; 3];
        let es = generate_subject(&p, 60, RATE).unwrap();
        let start = ((0.0 - es.window_ms.0) / 1000.0 * RATE).round() as usize;
        let mut total = 0.0;
        for i in 0..es.n_trials() {
            let seg: Vec<f64> = es
                .epochs
                .slice(ndarray::s![i, OZ, start..])
                .iter()
                .cloned()
                .collect();
            total += band_power(&seg, (8.0, 12.0), RATE).unwrap();
        }
        powers.push(total / es.n_trials() as f64);
    }
    assert!(
        powers[0] < powers[1] && powers[1] < powers[2],
        "alpha powers {powers:?} not increasing"
    );
}

#[test]
fn continuous_events_align_with_the_evoked_response() {
    let mut p = test_profile(44);
    p.noise_level_uv = 0.3;
    let rate = 512.0;
    let rec = generate_subject_continuous(&p, 30, rate).unwrap();
    let n = rec.samples.ncols();
    let span = (0.4 * rate) as usize;
    let mut erp = vec![0.0; span];
    for e in &rec.events {
        let s = e.sample_index as usize;
        assert!(s + span <= n);
        for i in 0..span {
            erp[i] += rec.samples[[OZ, s + i]];
        }
    }
    let (best_i, _) = erp
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |m, (i, &v)| if v > m.1 { (i, v) } else { m });
    let t_ms = best_i as f64 / rate * 1000.0;
    assert!(
        (t_ms - P1_CENTER_MS).abs() <= 8.0,
        "grand-average peak at {t_ms} ms after event"
    );
}
