//! Error type shared across the crate.

use thiserror::Error;

/// Unified error for geometry construction, assembly, solves, stepping,
/// experiment drivers, and I/O.
#[derive(Debug, Error)]
pub enum IceLabError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular system: no pivot at elimination step {pivot}")]
    SingularSystem { pivot: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last relative increment {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("time step of {dt} yr failed: {message}")]
    Step { dt: f64, message: String },

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, IceLabError>;

impl IceLabError {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        IceLabError::Io {
            path: path.into(),
            source,
        }
    }
}
