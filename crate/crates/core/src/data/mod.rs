//! Data model for continuous recordings and epoched trial sets.
//!
//! Values are microvolts throughout. Class labels are dense integers
//! `0..n_classes`; the mapping to physical stimulus values (cycles per
//! degree) rides along as metadata so downstream stages never see units.
//!
//! All containers are immutable after construction; concurrent readers
//! are safe.

pub(crate) mod io;
mod split;

pub use io::{
    load_epochs, load_recording, load_recording_csv, save_epochs, save_recording,
};
pub use split::{kfold_indices, split, split_indices, SplitPlan, SplitSpec};

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};

/// Stimulus marker: the sample at which a trial's grating appeared and
/// the class shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub sample_index: u64,
    pub label: u32,
}

/// A continuous multi-channel recording with stimulus events.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: u32,
    pub rate_hz: f64,
    /// Channel labels, one per row of `samples`.
    pub channels: Vec<String>,
    /// channel × time, microvolts.
    pub samples: Array2<f64>,
    pub events: Vec<Event>,
    /// Physical value of each class label (cycles per degree).
    pub class_values_cpd: Vec<f64>,
}

impl Recording {
    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    /// Check type invariants. Loaders and generators call this before
    /// handing out a value.
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {}",
                self.rate_hz
            )));
        }
        if self.channels.len() != self.samples.nrows() {
            return Err(Error::Shape {
                context: "recording",
                msg: format!(
                    "{} channel labels but {} sample rows",
                    self.channels.len(),
                    self.samples.nrows()
                ),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.channels {
            if !seen.insert(c) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate channel label {c:?}"
                )));
            }
        }
        let n = self.samples.ncols() as u64;
        for e in &self.events {
            if e.sample_index >= n {
                return Err(Error::InvalidArgument(format!(
                    "event at sample {} outside recording of {} samples",
                    e.sample_index, n
                )));
            }
        }
        Ok(())
    }
}

/// Epoched trials: one fixed-length window per surviving stimulus event.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub subject_id: u32,
    pub rate_hz: f64,
    pub channels: Vec<String>,
    /// trial × channel × time, microvolts.
    pub epochs: Array3<f64>,
    /// Per-trial class in `0..class_values_cpd.len()`.
    pub labels: Vec<u32>,
    /// Epoch window relative to stimulus onset, milliseconds.
    pub window_ms: (f64, f64),
    pub class_values_cpd: Vec<f64>,
}

impl EpochSet {
    pub fn n_trials(&self) -> usize {
        self.epochs.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.epochs.shape()[1]
    }

    pub fn n_time(&self) -> usize {
        self.epochs.shape()[2]
    }

    pub fn n_classes(&self) -> usize {
        self.class_values_cpd.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.n_trials() {
            return Err(Error::Shape {
                context: "epoch set",
                msg: format!(
                    "{} labels for {} trials",
                    self.labels.len(),
                    self.n_trials()
                ),
            });
        }
        if self.channels.len() != self.n_channels() {
            return Err(Error::Shape {
                context: "epoch set",
                msg: format!(
                    "{} channel labels but {} channel rows",
                    self.channels.len(),
                    self.n_channels()
                ),
            });
        }
        let k = self.n_classes() as u32;
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside 0..{k}"
            )));
        }
        if self.window_ms.0 >= self.window_ms.1 {
            return Err(Error::InvalidArgument(format!(
                "epoch window start {} >= end {}",
                self.window_ms.0, self.window_ms.1
            )));
        }
        Ok(())
    }

    /// Trials per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// New set containing the given trials, in the given order.
    pub fn take_trials(&self, indices: &[usize]) -> EpochSet {
        let epochs = self.epochs.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        EpochSet {
            subject_id: self.subject_id,
            rate_hz: self.rate_hz,
            channels: self.channels.clone(),
            epochs,
            labels,
            window_ms: self.window_ms,
            class_values_cpd: self.class_values_cpd.clone(),
        }
    }

    /// Merge trial sets that share channels, rate, window, and classes.
    pub fn concat_sets(sets: &[&EpochSet]) -> Result<EpochSet> {
        let first = sets.first().ok_or_else(|| {
            Error::InvalidArgument("concat_sets: empty input".into())
        })?;
        for s in &sets[1..] {
            if s.channels != first.channels
                || s.rate_hz != first.rate_hz
                || s.window_ms != first.window_ms
                || s.class_values_cpd != first.class_values_cpd
            {
                return Err(Error::InvalidArgument(
                    "concat_sets: incompatible epoch sets".into(),
                ));
            }
        }
        let views: Vec<_> = sets.iter().map(|s| s.epochs.view()).collect();
        let epochs = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape {
            context: "concat_sets",
            msg: e.to_string(),
        })?;
        let labels = sets.iter().flat_map(|s| s.labels.iter().copied()).collect();
        Ok(EpochSet {
            subject_id: first.subject_id,
            rate_hz: first.rate_hz,
            channels: first.channels.clone(),
            epochs,
            labels,
            window_ms: first.window_ms,
            class_values_cpd: first.class_values_cpd.clone(),
        })
    }
}

/// Restrict and reorder channels. Output channel order equals the
/// requested order; unknown names are collected into one error.
pub fn select_channels(es: &EpochSet, names: &[&str]) -> Result<EpochSet> {
    let mut idx = Vec::with_capacity(names.len());
    let mut missing = Vec::new();
    for &name in names {
        match es.channels.iter().position(|c| c == name) {
            Some(i) => idx.push(i),
            None => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnknownChannels(missing));
    }
    let epochs = es.epochs.select(Axis(1), &idx);
    Ok(EpochSet {
        subject_id: es.subject_id,
        rate_hz: es.rate_hz,
        channels: names.iter().map(|s| s.to_string()).collect(),
        epochs,
        labels: es.labels.clone(),
        window_ms: es.window_ms,
        class_values_cpd: es.class_values_cpd.clone(),
    })
}

/// The nine posterior channels the classifier consumes by default.
pub const DEFAULT_MODEL_CHANNELS: [&str; 9] =
    ["P3", "P4", "P7", "P8", "PO3", "PO4", "O1", "Oz", "O2"];

/// Grating spatial frequencies shown in the experiment, cycles per degree.
pub const DEFAULT_CLASS_VALUES_CPD: [f64; 3] = [0.05, 0.1, 0.3];

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    fn toy_epochs() -> EpochSet {
        let mut epochs = Array3::zeros((4, 3, 5));
        for t in 0..4 {
            for c in 0..3 {
                for s in 0..5 {
                    epochs[[t, c, s]] = (t * 100 + c * 10 + s) as f64;
                }
            }
        }
        EpochSet {
            subject_id: 1,
            rate_hz: 256.0,
            channels: vec!["O1".into(), "Oz".into(), "O2".into()],
            epochs,
            labels: vec![0, 1, 2, 0],
            window_ms: (-200.0, 800.0),
            class_values_cpd: DEFAULT_CLASS_VALUES_CPD.to_vec(),
        }
    }

    #[test]
    fn select_reorders_channels() {
        let es = toy_epochs();
        let out = select_channels(&es, &["Oz", "O1"]).unwrap();
        assert_eq!(out.channels, vec!["Oz".to_string(), "O1".to_string()]);
        assert_eq!(out.epochs[[2, 0, 3]], es.epochs[[2, 1, 3]]);
        assert_eq!(out.epochs[[2, 1, 3]], es.epochs[[2, 0, 3]]);
        assert_eq!(out.n_trials(), 4);
        assert_eq!(out.n_time(), 5);
    }

    #[test]
    fn select_full_order_is_identity() {
        let es = toy_epochs();
        let out = select_channels(&es, &["O1", "Oz", "O2"]).unwrap();
        assert_eq!(out, es);
    }

    #[test]
    fn select_is_idempotent() {
        let es = toy_epochs();
        let once = select_channels(&es, &["O2", "Oz"]).unwrap();
        let twice = select_channels(&once, &["O2", "Oz"]).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn select_lists_all_missing_names() {
        let es = toy_epochs();
        let err = select_channels(&es, &["O1", "P3", "P4"]).unwrap_err();
        match err {
            Error::UnknownChannels(names) => {
                assert_eq!(names, vec!["P3".to_string(), "P4".to_string()])
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn take_trials_selects_and_orders() {
        let es = toy_epochs();
        let out = es.take_trials(&[3, 1]);
        assert_eq!(out.labels, vec![0, 1]);
        assert_eq!(out.epochs[[0, 0, 0]], 300.0);
        assert_eq!(out.epochs[[1, 0, 0]], 100.0);
    }

    #[test]
    fn class_counts_tally() {
        assert_eq!(toy_epochs().class_counts(), vec![2, 1, 1]);
    }

    #[test]
    fn validate_rejects_bad_label() {
        let mut es = toy_epochs();
        es.labels[0] = 7;
        assert!(es.validate().is_err());
    }

    #[test]
    fn validate_rejects_event_past_end() {
        let rec = Recording {
            subject_id: 0,
            rate_hz: 512.0,
            channels: vec!["a".into()],
            samples: Array2::zeros((1, 10)),
            events: vec![Event {
                sample_index: 10,
                label: 0,
            }],
            class_values_cpd: DEFAULT_CLASS_VALUES_CPD.to_vec(),
        };
        assert!(rec.validate().is_err());
    }

    #[test]
    fn concat_sets_stacks_trials() {
        let a = toy_epochs();
        let b = toy_epochs().take_trials(&[0, 2]);
        let merged = EpochSet::concat_sets(&[&a, &b]).unwrap();
        assert_eq!(merged.n_trials(), 6);
        assert_eq!(merged.labels, vec![0, 1, 2, 0, 0, 2]);
    }
}
