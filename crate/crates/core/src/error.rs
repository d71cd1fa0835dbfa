use core::fmt;

use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter outside its admissible range.
    InvalidParameter { name: &'static str, message: String },
    /// Adaptive quadrature did not reach the requested tolerance.
    QuadratureNonConvergence { achieved: f64, requested: f64 },
    /// The integrator produced a non-finite value.
    IntegrationBlowUp { last_good_radius: f64 },
    /// Fixed-point iteration stopped before reaching its tolerance.
    NonConvergence { iterations: usize, distance: f64 },
    /// The inner linear solve failed.
    LinearSolve { iterations: usize, residual: f64 },
    /// Matrix expected to be symmetric positive definite.
    NotPositiveDefinite,
    /// Expression grammar error at a byte offset.
    Parse { position: usize, message: String },
    /// Radius outside of the field's grid.
    OutOfGrid { radius: f64, max: f64 },
    /// Operation is not available for the given representation or dimension.
    Unsupported(&'static str),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter { name, message: message.into() }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, message } => write!(f, "invalid {name}: {message}"),
            Error::QuadratureNonConvergence { achieved, requested } => {
                write!(f, "quadrature did not converge (achieved {achieved:e}, requested {requested:e})")
            }
            Error::IntegrationBlowUp { last_good_radius } => {
                write!(f, "integration blew up after radius {last_good_radius}")
            }
            Error::NonConvergence { iterations, distance } => {
                write!(f, "fixed-point iteration not converged after {iterations} iterations (distance {distance:e})")
            }
            Error::LinearSolve { iterations, residual } => write!(f, "linear solve failed after {iterations} iterations (residual {residual:e})"),
            Error::NotPositiveDefinite => f.write_str("matrix is not symmetric positive definite"),
            Error::Parse { position, message } => {
                write!(f, "expression error at {position}: {message}")
            }
            Error::OutOfGrid { radius, max } => {
                write!(f, "radius {radius} outside grid (max {max})")
            }
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
        }
    }
}

impl core::error::Error for Error {}
