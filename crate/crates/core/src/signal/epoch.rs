//! Cutting a continuous recording into stimulus-locked trials.

use ndarray::Array3;

use crate::data::{EpochSet, Recording};
use crate::error::{Error, Result};

/// Extract one fixed-length trial per event.
///
/// `window_ms` is relative to stimulus onset; a trial covers samples
/// `[event + round(start·rate), …)` with `round((end−start)·rate)`
/// samples, so all trials share one shape. Events without enough history
/// or future are dropped; the second return value counts them.
///
/// When `baseline_ms` is given, the per-channel mean over that interval
/// (clipped to the window) is subtracted from each trial.
pub fn epoch(
    rec: &Recording,
    window_ms: (f64, f64),
    baseline_ms: Option<(f64, f64)>,
) -> Result<(EpochSet, usize)> {
    let (w0, w1) = window_ms;
    if w0 >= w1 {
        return Err(Error::InvalidArgument(format!(
            "epoch window start {w0} ms >= end {w1} ms"
        )));
    }
    let rate = rec.rate_hz;
    let start_off = (w0 / 1000.0 * rate).round() as i64;
    let n_time = ((w1 - w0) / 1000.0 * rate).round() as usize;
    if n_time == 0 {
        return Err(Error::InvalidArgument(format!(
            "epoch window ({w0}, {w1}) ms is empty at {rate} Hz"
        )));
    }
    let total = rec.n_samples() as i64;
    let mut kept_events = Vec::new();
    let mut dropped = 0usize;
    for e in &rec.events {
        let begin = e.sample_index as i64 + start_off;
        if begin < 0 || begin + n_time as i64 > total {
            dropped += 1;
        } else {
            kept_events.push((begin as usize, e.label));
        }
    }
    let n_ch = rec.n_channels();
    let mut epochs = Array3::zeros((kept_events.len(), n_ch, n_time));
    let mut labels = Vec::with_capacity(kept_events.len());
    for (t, &(begin, label)) in kept_events.iter().enumerate() {
        labels.push(label);
        for c in 0..n_ch {
            for i in 0..n_time {
                epochs[[t, c, i]] = rec.samples[[c, begin + i]];
            }
        }
    }
    if let Some((b0, b1)) = baseline_ms {
        if b0 >= b1 {
            return Err(Error::InvalidArgument(format!(
                "baseline window start {b0} ms >= end {b1} ms"
            )));
        }
        // Trial-relative sample range, clipped to the window.
        let i0 = (((b0 - w0) / 1000.0 * rate).round() as i64).clamp(0, n_time as i64) as usize;
        let i1 = (((b1 - w0) / 1000.0 * rate).round() as i64).clamp(0, n_time as i64) as usize;
        if i1 > i0 {
            for t in 0..kept_events.len() {
                for c in 0..n_ch {
                    let mean: f64 = (i0..i1).map(|i| epochs[[t, c, i]]).sum::<f64>()
                        / (i1 - i0) as f64;
                    for i in 0..n_time {
                        epochs[[t, c, i]] -= mean;
                    }
                }
            }
        }
    }
    let es = EpochSet {
        subject_id: rec.subject_id,
        rate_hz: rate,
        channels: rec.channels.clone(),
        epochs,
        labels,
        window_ms,
        class_values_cpd: rec.class_values_cpd.clone(),
    };
    es.validate()?;
    Ok((es, dropped))
}
