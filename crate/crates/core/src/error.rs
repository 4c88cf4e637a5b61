use thiserror::Error;

/// Every failure the library can report, grouped by the module that raises it.
#[derive(Debug, Error)]
pub enum Error {
    // motion
    #[error("degenerate 6D rotation: {0}")]
    DegenerateRotation(String),
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
    #[error("sequence too short: need at least {need}, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    // shapes and lengths
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    // conditioning / training
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty embedding stream")]
    EmptyStream,

    // diffusion
    #[error("bad step count: {0}")]
    BadStepCount(String),
    #[error("bad step pair: tau={tau}, tau_prev={tau_prev}")]
    BadStepPair { tau: usize, tau_prev: usize },

    // denoiser
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("non-finite loss")]
    NonFiniteLoss,

    // streaming
    #[error("bad stride: {0}")]
    BadStride(String),
    #[error("condition gap: {0}")]
    ConditionGap(String),

    // metrics
    #[error("too few samples: need {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("empty sequence")]
    EmptySequence,

    // data io
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("missing array `{0}`")]
    MissingArray(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Coarse category used by the command line to pick an exit code.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DegenerateRotation(_)
            | Error::NotARotation(_)
            | Error::TooShort { .. }
            | Error::InvalidSkeleton(_) => "motion",
            Error::ShapeMismatch(_) | Error::LengthMismatch(_) => "shape",
            Error::EmptyCorpus | Error::EmptyStream => "conditioning",
            Error::BadStepCount(_) | Error::BadStepPair { .. } => "diffusion",
            Error::BadConfig(_) => "config",
            Error::NonFiniteLoss => "denoiser",
            Error::BadStride(_) | Error::ConditionGap(_) => "streaming",
            Error::TooFewSamples { .. } | Error::EmptySequence => "metrics",
            Error::CorruptManifest(_)
            | Error::MissingArray(_)
            | Error::UnknownScenario(_)
            | Error::Io { .. } => "dataio",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
