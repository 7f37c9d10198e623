//! Preprocessing chain for continuous EEG.
//!
//! The standard order mirrors the acquisition pipeline: band-pass filter,
//! band-stop (line noise) filter, downsample, common average reference,
//! epoch around stimulus onsets, artifact rejection, and a final
//! per-trial decimation to the model's input rate.

mod car;
mod epoch;
mod fir;
mod reject;
mod resample;

pub use car::common_average_reference;
pub use epoch::epoch;
pub use fir::{apply_fir, design_windowed_sinc, FilterKind, FirFilter};
pub use reject::{reject_artifacts, RejectionThresholds};
pub use resample::{downsample, downsample_epochs};
