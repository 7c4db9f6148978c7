use thiserror::Error;

/// Crate-wide error type.
///
/// `Validation` means the caller handed us something malformed (exit code 1
/// in the CLI); everything else is a runtime or solver failure (exit code 2).
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("exact layer capacity exceeded: {0}")]
    Capacity(String),

    #[error("thinning bound violated at bond {bond}, t = {t}: rate {rate} > bound {bound}")]
    RateBoundExceeded {
        bond: usize,
        t: f64,
        rate: f64,
        bound: f64,
    },

    #[error("Newton iteration failed to converge at t = {t}: residual {residual} after {iters} iterations")]
    NewtonDiverged { t: f64, residual: f64, iters: usize },

    #[error("discrete maximum principle violated at t = {t}, x = {x}: value {value}")]
    MaxPrinciple { t: f64, x: f64, value: f64 },

    #[error("sub-interval length fell below the step floor at t = {t} (requested {dt})")]
    StepFloor { t: f64, dt: f64 },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
