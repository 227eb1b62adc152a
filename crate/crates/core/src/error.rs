use alloc::string::String;

use crate::calibrate::CalibrationMethod;
use crate::embedding::TestKind;
use crate::sample::Domain;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("kernel is not symmetric on the quadrature nodes (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error(
        "eigenvalue {index} is {value:e}, at or below the numeric floor {floor:e}; \
         the truncation is too large for this quadrature"
    )]
    EigenvalueFloor { index: usize, value: f64, floor: f64 },
    #[error("empty sample")]
    EmptySample,
    #[error("point {index} lies outside the domain {domain}")]
    OutOfDomain { index: usize, domain: Domain },
    #[error("domain mismatch: expected {expected}, found {found}")]
    DomainMismatch { expected: Domain, found: Domain },
    #[error("basis is not degenerate under its null distribution")]
    NotDegenerate,
    #[error("explicit eigenfunctions are not available for this basis")]
    FeaturesUnavailable,
    #[error("Gram-form evaluation is limited to {limit} points, got {n}")]
    GramLimit { n: usize, limit: usize },
    #[error("lattice search exceeded its frontier budget of {0} entries")]
    FrontierBudget(usize),
    #[error("quadrature did not converge (change {0:e} between refinements); the profile is too rough")]
    QuadratureNotConverged(f64),
    #[error("non-positive eigenvalue {value:e} at index {index} in the fitting window")]
    NonPositiveEigenvalue { index: usize, value: f64 },
    #[error("at least {needed} values are required, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("Monte-Carlo calibration needs at least 100 replications, got {0}")]
    TooFewReplications(usize),
    #[error("calibration `{method}` cannot be used with the {kind} test")]
    IncompatibleCalibration { method: CalibrationMethod, kind: TestKind },
    #[error("missing calibration for the {0} test")]
    MissingCalibration(TestKind),
    #[error("calibration was built for alpha = {calibrated}, test requested alpha = {requested}")]
    AlphaMismatch { calibrated: f64, requested: f64 },
    #[error("no quadrature path for the `{0}` family under this null")]
    NoQuadraturePath(String),
    #[error("perturbation sup-norm bound {0} is not below 1; the density would not be positive")]
    Positivity(f64),
    #[error("rejection envelope violated: density ratio {0} exceeds 1")]
    Envelope(f64),
    #[error("coefficient list has {coefficients} entries but only {eigenvalues} eigenvalues were given")]
    ShortSpectrum { coefficients: usize, eigenvalues: usize },
    #[error("cannot parse `{input}`: {reason}")]
    Parse { input: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(input: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            input: input.into(),
            reason: reason.into(),
        }
    }
}
