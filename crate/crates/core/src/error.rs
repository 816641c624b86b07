use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Two charges coincide, or the kernel was evaluated at the origin.
    #[error("singular interaction: {0}")]
    Singularity(String),
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested (kernel, potential, operation) combination is not implemented.
    #[error("unsupported: {0}")]
    Capability(String),
    #[error("tolerance not met for {what}: achieved {achieved:.3e}, requested {requested:.3e}")]
    Tolerance {
        what: String,
        achieved: f64,
        requested: f64,
    },
    #[error("inconsistent inputs: {0}")]
    Consistency(String),
    #[error("periodic configuration is not neutral: {0}")]
    Neutrality(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid config at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
