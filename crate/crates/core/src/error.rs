use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the infoloss toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unstable AR polynomial, word {word}")]
    UnstableAr { word: usize },

    #[error("degenerate training signal")]
    DegenerateSignal,

    #[error("waveform shorter than one frame ({len} samples, frame is {frame})")]
    ShorterThanFrame { len: usize, frame: usize },

    #[error("waveform too short: {len} samples, need {needed}")]
    WaveformTooShort { len: usize, needed: usize },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotSpd { pivot: usize },

    #[error("matrix is ill-conditioned (condition estimate {estimate:.3e})")]
    IllConditioned { estimate: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid priors: {0}")]
    InvalidPriors(String),

    #[error("leave-one-out requires ≥ 2 realizations")]
    TooFewRealizations,

    #[error("ill-conditioned fit")]
    IllConditionedFit,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable code, used in CLI error lines and HTTP bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnstableAr { .. } => "unstable_ar",
            Error::DegenerateSignal => "degenerate_signal",
            Error::ShorterThanFrame { .. } | Error::WaveformTooShort { .. } => "too_short",
            Error::NotSpd { .. } => "not_spd",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidPriors(_) => "invalid_priors",
            Error::TooFewRealizations => "too_few_realizations",
            Error::IllConditionedFit => "ill_conditioned_fit",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidCorpus(_) => "invalid_corpus",
            Error::Io { .. } => "io",
            Error::Wav(_) => "wav",
            Error::Parse(_) => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
