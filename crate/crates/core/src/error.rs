/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mesh construction failed: {0}")]
    Mesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("linear solve failed at step {step} ({stage}): {iterations} iterations, residual {residual:.3e}")]
    SolveFailure {
        step: usize,
        stage: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("projection right-hand side has nonzero mean {mean:.3e} (assembly bug)")]
    NonzeroMean { mean: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
