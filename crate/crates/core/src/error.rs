use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("failed to parse configuration: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e} vs largest {max_eigenvalue:e}")]
    NotPsd {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("matrix is not Hermitian: relative asymmetry {0:e}")]
    NotHermitian(f64),

    #[error("quadrature did not converge for correlation lag {lag} (last error estimate {error:e})")]
    Quadrature { lag: usize, error: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("analytic breakdown: {0}")]
    AnalyticBreakdown(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("power point {p_dbm} dBm: {source}")]
    PowerPoint {
        p_dbm: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed cache file: {0}")]
    Cache(String),

    #[error("malformed csv: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors that originate in user-provided configuration.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidConfig(_) | Error::Parse(_) | Error::Io { .. } => true,
            Error::Trial { source, .. } | Error::PowerPoint { source, .. } => {
                source.is_config_error()
            }
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
