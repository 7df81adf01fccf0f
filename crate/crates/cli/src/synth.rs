use std::path::PathBuf;

use clap::ValueEnum;
use eat_core::data::{read_wav, write_wav, WavFormat};
use eat_core::phase_lab::{magnitude_waveform, phase_waveform};
use eat_core::StftConfig;

use crate::{CliResult, Failure};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Phase,
    Magnitude,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Float32,
    Pcm16,
}

impl From<Format> for WavFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Float32 => WavFormat::Float32,
            Format::Pcm16 => WavFormat::Pcm16,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, default_value_t = 1024)]
    n_fft: usize,
    /// Defaults to n_fft / 4.
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long, value_enum, default_value = "float32")]
    format: Format,
    input: PathBuf,
    output: PathBuf,
}

pub fn run(a: Args) -> CliResult {
    let stft = StftConfig::new(a.n_fft, a.hop.unwrap_or(a.n_fft / 4), true)?;
    let x = read_wav(&a.input)?;
    let y = match a.mode {
        Mode::Phase => phase_waveform(&x, &stft)?,
        Mode::Magnitude => magnitude_waveform(&x, &stft)?,
    };
    if a.output == a.input {
        return Err(Failure::invalid("output must differ from input"));
    }
    write_wav(&a.output, &y, a.format.into())?;
    Ok(())
}
