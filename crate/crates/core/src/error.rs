use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: SO(n) needs n >= 2")]
    InvalidDimension(usize),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("matrix is not orthogonal: ||M^T M - I||_F = {defect:e} exceeds {tol:e}")]
    NotOrthogonal { defect: f64, tol: f64 },

    #[error("orthogonal matrix has non-positive determinant {0}")]
    NegativeDeterminant(f64),

    #[error("I - Z^T Z is not positive definite with margin {margin:e} (largest block angle {max_angle})")]
    NotAContraction { max_angle: f64, margin: f64 },

    #[error("rotation angle {angle} is within {tol:e} of pi; principal logarithm undefined")]
    AngleAtPi { angle: f64, tol: f64 },

    #[error("tangent increment rejected {retries} times in a row; step size too large for this noise scale")]
    RetriesExhausted { retries: usize },

    #[error("model has {model} Brownian drivers but {got} increments were supplied")]
    DriverMismatch { model: usize, got: usize },

    #[error("coarsening factor {factor} does not divide {steps} steps")]
    NonDivisibleCoarsening { factor: usize, steps: usize },

    #[error("step size mismatch: config delta {config} vs noise delta {noise}")]
    StepSizeMismatch { config: f64, noise: f64 },

    #[error("invalid step configuration: {0}")]
    InvalidStepConfig(String),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("paths cannot be paired: {0}")]
    UnpairedPaths(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("no timing diagnostics recorded")]
    EmptyDiagnostics,

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Errors that come from the numerics rather than from bad inputs.
    pub fn is_numerical(&self) -> bool {
        if let Error::AtStep { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NotAContraction { .. }
                | Error::AngleAtPi { .. }
                | Error::RetriesExhausted { .. }
                | Error::NotOrthogonal { .. }
                | Error::NegativeDeterminant(_)
        )
    }
}
