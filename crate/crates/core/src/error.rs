use thiserror::Error;

pub type Result<T> = std::result::Result<T, LyapError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigenvalue iteration did not converge")]
    NonConvergence,

    #[error("eigenvector matrix is numerically singular (cond estimate {0:.3e})")]
    IllConditionedEigenbasis(f64),

    #[error("eigenvalues {i} and {j} nearly cancel: |l_i + l_j| = {value:.3e}")]
    NearSingularPair { i: usize, j: usize, value: f64 },

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("matrix is singular to working precision")]
    SingularMatrix,

    #[error("parameter {index} is zero")]
    ZeroParameter { index: usize },

    #[error("preconditioner capacitance or diagonal block is singular")]
    SingularPrecondBlock,

    #[error("iteration limit reached: {iterations} iterations, relative residual {relres:.3e}")]
    MaxIterationsExceeded { iterations: usize, relres: f64 },

    #[error("Krylov breakdown with relative residual {relres:.3e}")]
    BreakdownDetected { relres: f64 },

    #[error("assembled solution fails residual check: {relres:.3e} > {tol:.3e}")]
    AccuracyLoss { relres: f64, tol: f64 },

    #[error("A0 is not dissipative: largest eigenvalue of its symmetric part is {alpha0:.3e}")]
    NotDissipative { alpha0: f64 },

    #[error("extended Krylov space is saturated")]
    SaturatedSpace,

    #[error("projected Lyapunov equation is singular")]
    SingularProjectedEquation,

    #[error("harmonic Ritz projection is degenerate")]
    DegenerateProjection,

    #[error("mass {index} is not positive")]
    NonPositiveMass { index: usize },

    #[error("size {size} is not divisible by {divisor}")]
    IndivisibleSize { size: usize, divisor: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("agent index {0} must be odd for the pair perturbation")]
    EvenIndex(usize),

    #[error("closed loop matrix is unstable")]
    Unstable,

    #[error("evaluation budget of {0} exhausted")]
    EvaluationBudgetExceeded(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LyapError {
    fn from(e: std::io::Error) -> Self {
        LyapError::Io(e.to_string())
    }
}
