//! Common average reference.

use crate::data::Recording;
use crate::error::{Error, Result};

/// Re-reference every sample to the instantaneous mean across channels.
/// After this, the channel mean at each time point is zero.
pub fn common_average_reference(rec: &Recording) -> Result<Recording> {
    if rec.n_channels() < 2 {
        return Err(Error::InvalidArgument(
            "common average reference needs at least 2 channels".into(),
        ));
    }
    let mean = rec.samples.mean_axis(ndarray::Axis(0)).unwrap();
    let samples = &rec.samples - &mean;
    Ok(Recording {
        subject_id: rec.subject_id,
        rate_hz: rec.rate_hz,
        channels: rec.channels.clone(),
        samples,
        events: rec.events.clone(),
        class_values_cpd: rec.class_values_cpd.clone(),
    })
}
