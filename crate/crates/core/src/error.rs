use thiserror::Error;

/// Errors reported by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a precondition.
    #[error("invalid {param}: {reason}")]
    Config { param: String, reason: String },

    /// A feature is too small for the sampling grid.
    #[error("{what} is under-resolved: needs pitch <= {required_pitch:.4e} m, grid pitch is {pitch:.4e} m")]
    UnderResolved {
        what: String,
        required_pitch: f64,
        pitch: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no guided modes in the numerical window (V = {v:.4})")]
    EmptyBasis { v: f64 },

    #[error("root bracketing failed for l = {l} in effective index interval [{n_low:.12}, {n_high:.12}]")]
    Bracket { l: u32, n_low: f64, n_high: f64 },

    #[error("cannot match mode {mode} across wavelengths: best overlap {overlap:.3}")]
    ModeMatch { mode: String, overlap: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("mean intensity in the region of interest is zero")]
    ZeroMean,

    #[error("phase-matching kernel under-sampled: {0}")]
    KernelUnderSampled(String),

    #[error("invalid region of interest: {0}")]
    Roi(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(param: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        param: param.to_string(),
        reason: reason.into(),
    }
}
