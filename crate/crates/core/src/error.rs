use thiserror::Error;

/// Errors raised by the model, strategy and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("exponential integral is singular at 0")]
    SingularPoint,

    #[error("divergent moment: {0}")]
    DivergentMoment(String),

    #[error("quadrature did not reach tolerance {tol:e} after {subdivisions} subdivisions (error estimate {estimate:e})")]
    Quadrature {
        tol: f64,
        subdivisions: usize,
        estimate: f64,
    },

    #[error("time regression: state at t={state_t}, requested t={requested}")]
    TimeRegression { state_t: f64, requested: f64 },

    #[error("schedule does not liquidate: terminal position residual {residual:e}")]
    NotLiquidating { residual: f64 },

    #[error("non-finite intensity at t={t}")]
    NonFiniteIntensity { t: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { name, value })
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
