use thiserror::Error;

/// Errors raised by the numerical layers of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("pole of the gamma function at x = {0}")]
    GammaPole(f64),

    #[error("argument {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("overflow evaluating {what} at {value}; use the exponentially scaled form")]
    Overflow { what: &'static str, value: f64 },

    #[error("invalid hyperboloid point: {0}")]
    InvalidPoint(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature failed to reach tolerance in {context}: estimate {estimate:e}, error {error:e}")]
    Quadrature {
        context: &'static str,
        estimate: f64,
        error: f64,
    },

    #[error("kernel used before its constant alpha_gamma was calibrated")]
    CalibrationMissing,

    #[error("calibration routes disagree: analytic {analytic}, spectral fit {fitted} (rel. diff {rel_diff:e})")]
    CalibrationInconsistent {
        analytic: f64,
        fitted: f64,
        rel_diff: f64,
    },

    #[error("spectral evaluation unstable under grid doubling (rel. change {0:e})")]
    Instability(f64),

    #[error("test function of Hölder class {alpha} is too rough for order {gamma} (needs alpha > 2*gamma)")]
    Smoothness { alpha: f64, gamma: f64 },

    #[error("heat solver leaked mass: {mass} < {required}")]
    MassLeak { mass: f64, required: f64 },

    #[error("heat kernel provider cannot evaluate this pair of points: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid warping profile: {0}")]
    InvalidProfile(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for the numerical nonconvergence family (CLI exit code 3).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Quadrature { .. }
                | Error::Instability(_)
                | Error::MassLeak { .. }
                | Error::CalibrationInconsistent { .. }
                | Error::Overflow { .. }
        )
    }
}
