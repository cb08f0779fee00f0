use std::fmt;

use thiserror::Error;

/// Errors raised by model construction, filtering and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("{what} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { what: String, min_eigenvalue: f64 },

    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("innovation covariance is singular or ill-conditioned")]
    SingularInnovation,

    #[error("at x = {x}: {source}")]
    AtPoint {
        x: PointDisplay,
        #[source]
        source: Box<Error>,
    },

    #[error("sensor {sensor}: {source}")]
    Sensor {
        sensor: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_point(x: &[f64], source: Error) -> Self {
        Error::AtPoint {
            x: PointDisplay(x.to_vec()),
            source: Box::new(source),
        }
    }

    pub fn for_sensor(sensor: usize, source: Error) -> Self {
        Error::Sensor {
            sensor,
            source: Box::new(source),
        }
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NonSquare { .. } => "non_square",
            Error::NotPsd { .. } => "not_psd",
            Error::NoConvergence { .. } => "no_convergence",
            Error::SingularInnovation => "singular_innovation",
            Error::AtPoint { source, .. } | Error::Sensor { source, .. } => source.kind(),
            Error::InvalidInput(_) => "invalid_input",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Sensor id carried anywhere in the error chain.
    pub fn sensor(&self) -> Option<usize> {
        match self {
            Error::Sensor { sensor, .. } => Some(*sensor),
            Error::AtPoint { source, .. } => source.sensor(),
            _ => None,
        }
    }
}

/// Parameter vector wrapper so errors can print the offending point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointDisplay(pub Vec<f64>);

impl fmt::Display for PointDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
