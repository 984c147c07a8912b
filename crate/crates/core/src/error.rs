//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Kernel evaluated at its singular point (x = 0 for the fundamental
    /// solution, x = z for the Neumann function).
    #[error("evaluation at a singular point of the kernel")]
    SingularPoint,

    /// Plain quadrature is unreliable this close to the curve; callers must
    /// either move the target or use the dedicated near-field evaluation.
    #[error(
        "target at distance {dist:.3e} from the curve is inside the near-field limit {limit:.3e}"
    )]
    NearSingularTarget { dist: f64, limit: f64 },

    /// The resolvent parameter violates |lambda| >= 1/2, where the operator
    /// lambda*I - K* stops being invertible.
    #[error("resolvent parameter lambda = {0} lies inside the open interval (-1/2, 1/2)")]
    OutsideInvertibilityRange(f64),

    /// At lambda = 1/2 the resolvent is only invertible on the mean-zero
    /// subspace; the supplied right-hand side has a nonzero mean.
    #[error("right-hand side must be mean-zero at lambda = 1/2 (weighted mean {0:.3e})")]
    IncompatibleRhs(f64),

    /// Neumann data for an interior problem must have zero total flux.
    #[error("boundary flux must have zero mean (weighted mean {0:.3e})")]
    IncompatibleFlux(f64),

    #[error("domain constraint violated: {0}")]
    DomainViolation(String),

    /// Conductivity contrast k = 1 makes the inclusion invisible; the
    /// transmission system is degenerate (the solution is the background).
    #[error("degenerate contrast k = 1; the perturbation vanishes identically")]
    DegenerateContrast,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
