use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("point is not in the closure of the domain (distance estimate {distance:.3e})")]
    OutOfDomain { distance: f64 },

    #[error("step condition violated: {0}")]
    StepCondition(String),

    #[error("numerical blow-up at t = {t}: |u| = {norm:.3e} exceeds {limit:.3e}")]
    Blowup { t: f64, norm: f64, limit: f64 },

    #[error("approximating sequence is not Cauchy: last gap {last_gap:.3e} > tolerance {tol:.3e}")]
    NonCauchy { gaps: Vec<f64>, last_gap: f64, tol: f64 },

    #[error("fixed-point map does not contract: observed ratio {ratio:.3}")]
    NoContraction { ratio: f64, history: Vec<f64> },

    #[error("configuration error in `{field}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        field: String,
        line: Option<usize>,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            line: None,
            message: message.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
