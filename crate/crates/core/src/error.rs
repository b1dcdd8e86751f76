use thiserror::Error;

/// Errors raised by the simulator and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// A datum, grid or kernel description is malformed.
    #[error("invalid input: {0}")]
    InvalidSpec(String),
    /// A run or experiment configuration is inconsistent or out of scope.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    /// The integrator produced a non-finite value, typically a collapse with zero softening.
    #[error("non-finite {quantity} at step {step} (particle {particle})")]
    NonFinite {
        quantity: &'static str,
        step: usize,
        particle: usize,
    },
    #[error("time {time} outside stored horizon [{start}, {end}]")]
    OutOfHorizon { time: f64, start: f64, end: f64 },
    /// Two histories cannot be compared (different seeding or sample times).
    #[error("histories are not comparable: {0}")]
    Mismatch(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user input rather than by the numerics.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_) | Error::Config(_) | Error::DimensionMismatch { .. } | Error::Unsupported(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidSpec(msg.into()))
}
