use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("no click available: mask is empty")]
    NoClickAvailable,
    #[error("no correction needed: prediction matches ground truth")]
    NoCorrectionNeeded,
    #[error("no scribble available: mask is empty")]
    NoScribbleAvailable,
    #[error("synthetic label stayed empty after {0} attempts")]
    EmptySynthLabel(usize),
    #[error("label volume has no foreground in any slice")]
    EmptyLabelVolume,
    #[error("distance is undefined for an empty mask")]
    EmptyMaskDistanceUndefined,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("png: {0}")]
    Png(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

pub(crate) fn ensure_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape { expected, actual })
    }
}
