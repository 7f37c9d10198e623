//! Statistical artifact rejection of epoched trials.

use crate::data::EpochSet;
use crate::error::Result;
use crate::util::{median, std_pop};

/// Trial rejection thresholds. A trial is removed when any rule fires:
///
/// * absolute: any sample exceeds `abs_amplitude_uv` in magnitude;
/// * per-channel: one channel's trial std exceeds `channel_std_z` times
///   the median of that channel's trial stds across the set;
/// * pooled: the all-channel trial std exceeds `global_std_z` times the
///   median pooled trial std.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionThresholds {
    pub abs_amplitude_uv: f64,
    pub channel_std_z: f64,
    pub global_std_z: f64,
}

impl Default for RejectionThresholds {
    fn default() -> Self {
        RejectionThresholds {
            abs_amplitude_uv: 100.0,
            channel_std_z: 5.0,
            global_std_z: 5.0,
        }
    }
}

impl RejectionThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.abs_amplitude_uv <= 0.0 || self.channel_std_z <= 0.0 || self.global_std_z <= 0.0
        {
            return Err(crate::error::Error::InvalidArgument(format!(
                "rejection thresholds must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Apply all three rejection rules. Returns the surviving trials and a
/// keep mask aligned with the input trial order.
pub fn reject_artifacts(
    es: &EpochSet,
    th: &RejectionThresholds,
) -> Result<(EpochSet, Vec<bool>)> {
    th.validate()?;
    let n = es.n_trials();
    if n == 0 {
        return Ok((es.clone(), Vec::new()));
    }
    let n_ch = es.n_channels();

    // channel_stds[c][t]: std of channel c in trial t.
    let mut channel_stds = vec![vec![0.0f64; n]; n_ch];
    let mut pooled_stds = vec![0.0f64; n];
    for t in 0..n {
        let trial = es.epochs.index_axis(ndarray::Axis(0), t);
        for c in 0..n_ch {
            let row: Vec<f64> = trial.row(c).to_vec();
            channel_stds[c][t] = std_pop(&row);
        }
        let all: Vec<f64> = trial.iter().copied().collect();
        pooled_stds[t] = std_pop(&all);
    }
    let channel_medians: Vec<f64> = channel_stds.iter().map(|s| median(s)).collect();
    let pooled_median = median(&pooled_stds);

    let mask: Vec<bool> = (0..n)
        .map(|t| {
            let trial = es.epochs.index_axis(ndarray::Axis(0), t);
            if trial.iter().any(|&v| v.abs() > th.abs_amplitude_uv) {
                return false;
            }
            for c in 0..n_ch {
                if channel_stds[c][t] > th.channel_std_z * channel_medians[c] {
                    return false;
                }
            }
            pooled_stds[t] <= th.global_std_z * pooled_median
        })
        .collect();
    let kept: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &k)| k.then_some(i))
        .collect();
    Ok((es.take_trials(&kept), mask))
}
