use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid, index, or parameter choice.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dyadic block index {j} outside [{min}, {max}]")]
    Index { j: i32, min: i32, max: i32 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("kernel singularity: {0}")]
    Singularity(String),

    #[error("numerical instability at step {step}: {detail}")]
    Instability { step: usize, detail: String },

    /// Picard iteration failed to contract. Carries the full residual history
    /// so callers can see whether the damping was too small.
    #[error("fixed point did not converge after {iterations} iterations (last residual {last:.3e})", last = residuals.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { iterations: usize, residuals: Vec<f64> },

    #[error("simulation failed on path {path} at step {step}: {detail}")]
    Simulation { path: usize, step: usize, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
