//! EEG grating-response decoding.
//!
//! End-to-end pipeline for classifying the spatial frequency of a viewed
//! grating from single-trial EEG: raw-recording and epoch containers with
//! binary persistence, FIR filtering / resampling / re-referencing /
//! artifact rejection, a CNN-LSTM classifier trained with a from-scratch
//! reverse-mode autodiff engine, study protocols (within-subject
//! cross-validation, cross-subject transfer, fine-tuning sweeps), a linear
//! SVM band-power baseline, an exact Wilcoxon signed-rank test, and a
//! synthetic EEG generator for end-to-end validation.

pub mod autodiff;
pub mod baseline;
pub mod data;
pub mod error;
pub mod eval;
pub mod network;
pub mod signal;
pub mod synth;
pub mod training;
pub mod util;

pub use error::{Error, Result};

/// Library version, recorded in run manifests and checkpoint tooling.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
