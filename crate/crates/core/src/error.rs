use thiserror::Error;

/// Everything that can go wrong inside the numeric modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mean {mean:e} is not zero (tolerance {tol:e})")]
    NonZeroMean { mean: f64, tol: f64 },

    #[error("operation needs dimension {expected}, got {got}")]
    WrongDimension { expected: usize, got: usize },

    #[error("grid resolution {got} is below the required {required}")]
    ResolutionTooLow { got: usize, required: usize },

    #[error("coefficients violate conjugate symmetry at frequency {freq:?}")]
    NotReal { freq: Vec<i32> },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bump geometry infeasible: 2*b_n = {two_b:.6} must be < 1/2")]
    InfeasibleGeometry { two_b: f64 },

    #[error("Jackson approximation missed C0 accuracy {target:e} after {doublings} doublings (last error {achieved:e} at N = {degree})")]
    ApproximationFailed {
        target: f64,
        achieved: f64,
        degree: usize,
        doublings: usize,
    },

    #[error("matrix-variant perturbation has incompatible mode {freq:?}: A*k is not parallel to k")]
    ModeIncompatible { freq: Vec<i32> },

    #[error("matrix A is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("twist hypothesis (H1) fails: min eigenvalue {min_eigenvalue:e}")]
    HypothesisFailed { min_eigenvalue: f64 },

    #[error("g is not monotone: min finite-difference slope {min_slope:e}")]
    NonMonotoneG { min_slope: f64 },

    #[error("g is not invertible: {0}")]
    NonInvertibleG(String),

    #[error("graph transform did not converge in {iterations} iterations (last change {last_change:e})")]
    MaxIterExceeded { iterations: usize, last_change: f64 },

    #[error("orbit left the bounded region: |y| = {value:e}")]
    Overflow { value: f64 },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("invalid candidate graph: {0}")]
    InvalidGraph(String),
}

impl Error {
    /// True for failures caused by bad inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonZeroMean { .. }
                | Error::WrongDimension { .. }
                | Error::ResolutionTooLow { .. }
                | Error::NotReal { .. }
                | Error::OutOfRange { .. }
                | Error::InvalidArgument(_)
                | Error::InfeasibleGeometry { .. }
                | Error::ModeIncompatible { .. }
                | Error::NotPositiveDefinite
                | Error::InvalidGraph(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonZeroMean { .. } => "NonZeroMean",
            Error::WrongDimension { .. } => "WrongDimension",
            Error::ResolutionTooLow { .. } => "ResolutionTooLow",
            Error::NotReal { .. } => "NotReal",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::InfeasibleGeometry { .. } => "InfeasibleGeometry",
            Error::ApproximationFailed { .. } => "ApproximationFailed",
            Error::ModeIncompatible { .. } => "ModeIncompatible",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::HypothesisFailed { .. } => "HypothesisFailed",
            Error::NonMonotoneG { .. } => "NonMonotoneG",
            Error::NonInvertibleG(_) => "NonInvertibleG",
            Error::MaxIterExceeded { .. } => "MaxIterExceeded",
            Error::Overflow { .. } => "Overflow",
            Error::EmptyCloud => "EmptyCloud",
            Error::InvalidGraph(_) => "InvalidGraph",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
