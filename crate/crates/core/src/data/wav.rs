//! RIFF/WAVE reading and writing (PCM 16-bit and IEEE float 32-bit).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::signal::Waveform;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("malformed WAV file: {0}")]
    Malformed(String),
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("truncated WAV data chunk: expected {expected} samples, found {found}")]
    Truncated { expected: u32, found: u32 },
    #[error("WAV I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for WavError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => WavError::Io(io),
            hound::Error::FormatError(m) => WavError::Malformed(m.to_string()),
            hound::Error::Unsupported => WavError::Unsupported("codec not supported".into()),
            hound::Error::TooWide => WavError::Unsupported("sample too wide".into()),
            hound::Error::InvalidSampleFormat => WavError::Unsupported("invalid sample format".into()),
            hound::Error::UnfinishedSample => WavError::Malformed("unfinished sample".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

/// Reads samples until the data ends. A read failure inside the data chunk
/// means it is shorter than its header claims; the caller reports that.
fn collect<S>(samples: impl Iterator<Item = hound::Result<S>>, f: impl Fn(S) -> f64) -> std::result::Result<Vec<f64>, WavError> {
    let mut v = Vec::new();
    for s in samples {
        match s {
            Ok(s) => v.push(f(s)),
            Err(hound::Error::IoError(_)) => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(v)
}

fn read_inner(path: &Path) -> std::result::Result<Waveform, WavError> {
    let file = std::fs::File::open(path)?;
    let mut reader = hound::WavReader::new(std::io::BufReader::new(file))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || spec.sample_rate == 0 {
        return Err(WavError::Malformed("zero channels or sample rate".into()));
    }
    let expected = reader.len();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => collect(reader.samples::<i16>(), |s| s as f64 / 32768.0)?,
        (hound::SampleFormat::Float, 32) => collect(reader.samples::<f32>(), |s| s as f64)?,
        (fmt, bits) => return Err(WavError::Unsupported(format!("{fmt:?} {bits}-bit"))),
    };
    if (interleaved.len() as u32) < expected {
        return Err(WavError::Truncated { expected, found: interleaved.len() as u32 });
    }
    if interleaved.iter().any(|v| !v.is_finite()) {
        return Err(WavError::Malformed("non-finite sample".into()));
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        log::warn!("{}: averaging {channels} channels to mono", path.display());
        interleaved.chunks_exact(channels).map(|f| f.iter().sum::<f64>() / channels as f64).collect()
    };
    Ok(Waveform { samples, sample_rate: spec.sample_rate })
}

/// Reads a mono or multichannel WAV file; multichannel input is averaged.
/// Samples are normalized to [−1, 1].
pub fn read_wav(path: &Path) -> Result<Waveform> {
    Ok(read_inner(path)?)
}

fn write_inner(path: &Path, x: &Waveform, format: WavFormat) -> std::result::Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: x.sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    match format {
        WavFormat::Pcm16 => {
            for &s in &x.samples {
                w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
            }
        }
        WavFormat::Float32 => {
            for &s in &x.samples {
                w.write_sample(s as f32)?;
            }
        }
    }
    w.finalize()?;
    Ok(())
}

/// Writes a mono WAV file. PCM16 clips to the representable range.
pub fn write_wav(path: &Path, x: &Waveform, format: WavFormat) -> Result<()> {
    Ok(write_inner(path, x, format)?)
}
