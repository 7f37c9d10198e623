//! Anti-aliased integer-ratio downsampling.

use ndarray::{Array2, Array3};

use super::fir::{filter_channel, lowpass_taps_for_rate};
use crate::data::{EpochSet, Event, Recording};
use crate::error::{Error, Result};

/// Integer decimation ratio, or an error if the rates do not divide.
fn ratio(from_hz: f64, to_hz: f64) -> Result<usize> {
    if !(to_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target rate must be positive, got {to_hz}"
        )));
    }
    let r = from_hz / to_hz;
    let ri = r.round();
    if ri < 1.0 || (r - ri).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "downsample ratio {from_hz}/{to_hz} = {r} is not a positive integer"
        )));
    }
    Ok(ri as usize)
}

/// Downsample a continuous recording to `target_rate_hz`.
///
/// An anti-aliasing low-pass (windowed sinc, cutoff 0.45 × target rate)
/// runs before decimation; event indices are rescaled round-to-nearest.
/// Output length is ⌊n/r⌋.
pub fn downsample(rec: &Recording, target_rate_hz: f64) -> Result<Recording> {
    let r = ratio(rec.rate_hz, target_rate_hz)?;
    if r == 1 {
        return Ok(rec.clone());
    }
    let n_out = rec.n_samples() / r;
    if n_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "recording of {} samples too short for ratio {r}",
            rec.n_samples()
        )));
    }
    let taps = lowpass_taps_for_rate(target_rate_hz, rec.rate_hz)?;
    let mut out = Array2::zeros((rec.n_channels(), n_out));
    for (ch, row) in rec.samples.outer_iter().enumerate() {
        let filtered = filter_channel(&row.to_vec(), &taps);
        for i in 0..n_out {
            out[[ch, i]] = filtered[i * r];
        }
    }
    let events = rec
        .events
        .iter()
        .map(|e| Event {
            sample_index: (((e.sample_index as f64) / r as f64).round() as u64)
                .min(n_out as u64 - 1),
            label: e.label,
        })
        .collect();
    Ok(Recording {
        subject_id: rec.subject_id,
        rate_hz: target_rate_hz,
        channels: rec.channels.clone(),
        samples: out,
        events,
        class_values_cpd: rec.class_values_cpd.clone(),
    })
}

/// Downsample every trial of an epoch set (same anti-alias design as
/// [`downsample`]); used to bring epoched data to the model rate.
pub fn downsample_epochs(es: &EpochSet, target_rate_hz: f64) -> Result<EpochSet> {
    let r = ratio(es.rate_hz, target_rate_hz)?;
    if r == 1 {
        return Ok(es.clone());
    }
    let n_out = es.n_time() / r;
    if n_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "trials of {} samples too short for ratio {r}",
            es.n_time()
        )));
    }
    let taps = lowpass_taps_for_rate(target_rate_hz, es.rate_hz)?;
    let mut out = Array3::zeros((es.n_trials(), es.n_channels(), n_out));
    for t in 0..es.n_trials() {
        for c in 0..es.n_channels() {
            let x: Vec<f64> = es.epochs.slice(ndarray::s![t, c, ..]).to_vec();
            let filtered = filter_channel(&x, &taps);
            for i in 0..n_out {
                out[[t, c, i]] = filtered[i * r];
            }
        }
    }
    Ok(EpochSet {
        subject_id: es.subject_id,
        rate_hz: target_rate_hz,
        channels: es.channels.clone(),
        epochs: out,
        labels: es.labels.clone(),
        window_ms: es.window_ms,
        class_values_cpd: es.class_values_cpd.clone(),
    })
}
