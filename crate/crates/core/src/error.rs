use thiserror::Error;

use crate::data::wav::WavError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("invalid STFT configuration: {0}")]
    InvalidStft(String),
    #[error("overlap-add normalization is zero at sample {0}")]
    ZeroNormalization(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("invalid model configuration: {0}")]
    InvalidModelConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("input of {len} samples is shorter than the receptive field ({min})")]
    InputTooShort { len: usize, min: usize },
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("gradient for `{0}` is not finite")]
    NonFiniteGradient(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the filesystem rather than by invalid input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Wav(WavError::Io(_)))
    }
}
