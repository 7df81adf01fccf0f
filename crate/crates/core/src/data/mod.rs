//! Dataset ingestion: WAV files, CSV manifests and fixed-duration batches.

pub mod manifest;
pub mod wav;

pub use manifest::{load_manifest, Manifest, ManifestRecord};
pub use wav::{read_wav, write_wav, WavError, WavFormat};

use crate::error::{Error, Result};
use crate::mix::LabeledSample;
use crate::parallel::{self, Execution};
use crate::signal::{pad_or_trim, resample, PadMode, Waveform};

/// Number of samples of a clip of `duration_s` at `rate`.
pub fn clip_len(duration_s: f64, rate: u32) -> Result<usize> {
    if !(duration_s > 0.0 && duration_s.is_finite()) || rate == 0 {
        return Err(Error::InvalidParameter(format!("duration {duration_s} s at {rate} Hz")));
    }
    Ok((duration_s * rate as f64).round() as usize)
}

/// Resamples to `rate` and zero-pads or truncates (keeping the start) to
/// `round(duration_s · rate)` samples.
pub fn fit_clip(x: &Waveform, duration_s: f64, rate: u32) -> Result<Waveform> {
    let n = clip_len(duration_s, rate)?;
    pad_or_trim(&resample(x, rate)?, n, PadMode::ZeroPadEnd)
}

/// Loads the records at `indices`, fitted to a common length.
pub fn make_batch(m: &Manifest, indices: &[usize], duration_s: f64, rate: u32, exec: Execution) -> Result<Vec<LabeledSample>> {
    clip_len(duration_s, rate)?;
    parallel::try_map(exec, indices.len(), |k| {
        let r = m.records.get(indices[k]).ok_or_else(|| Error::Manifest(format!("no record {}", indices[k])))?;
        let w = read_wav(&m.audio_path(r))?;
        Ok(LabeledSample { waveform: fit_clip(&w, duration_s, rate)?, label: m.label_vector(r) })
    })
}
