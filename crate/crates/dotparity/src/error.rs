use thiserror::Error;

/// Errors shared across the simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operands live on different bases ({left} vs {right})")]
    BasisMismatch { left: String, right: String },

    #[error("basis label {0:?} is not registered")]
    MissingLabel(String),

    #[error("duplicate basis label {0:?}")]
    DuplicateLabel(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("trace {trace:.3e} is below the conditioning floor; branch has vanishing probability")]
    ImpossibleBranch { trace: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("integrator step size underflow at t = {t:.6e}")]
    StepSizeUnderflow { t: f64 },

    #[error("quadrature did not converge: refinement changed the result by {delta:.3e}")]
    QuadratureDiverged { delta: f64 },

    #[error("stabilizer expectation too close to zero for discrimination ({0:.3})")]
    IndeterminateOutcome(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
