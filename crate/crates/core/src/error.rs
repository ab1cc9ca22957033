use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |M - M†| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("jump operators are not normalized: ||Σ V†V - I|| = {deviation:.3e}")]
    JumpNormalization { deviation: f64 },

    #[error("matrix is singular at u = {u}")]
    Singular { u: Complex64 },

    #[error("numeric overflow in {0}")]
    Overflow(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("root finder failed: {message} (residual {residual:.3e})")]
    RootFinding { message: String, residual: f64 },

    #[error("no bracketing root for the cutoff relation: residual {lo:.3e} at lower end, {hi:.3e} at upper end")]
    NoBracket { lo: f64, hi: f64 },

    #[error("Talbot inversion failed at t = {t}: {reason}")]
    Talbot { t: f64, reason: &'static str },

    #[error("power-law fit needs at least {needed} points in window, found {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error(
        "step size too coarse: step-halving difference {estimate:.3e} exceeds {tolerance:.1e}"
    )]
    StepTooCoarse { estimate: f64, tolerance: f64 },
}
