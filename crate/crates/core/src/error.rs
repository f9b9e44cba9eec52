use thiserror::Error;

/// Errors raised by the library. Variants carry enough context to tell the
/// caller which knob to turn (tolerance, budget, configuration).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("zero polynomial: the piece is flat and has no normalisation")]
    ZeroPolynomial,

    #[error("subdivision budget of {cap} boxes exceeded (tol = {tol:e})")]
    BudgetExceeded { cap: usize, tol: f64 },

    #[error("oracle has no derivative of order ({0}, {1})")]
    OracleMissingDerivative(u32, u32),

    #[error("degenerate parallelogram (det = {0:e})")]
    DegenerateParallelogram(f64),

    #[error("certified range [{lower:e}, {upper:e}] straddles threshold {threshold:e}")]
    EnclosureTooLoose {
        lower: f64,
        upper: f64,
        threshold: f64,
    },

    #[error("polynomial norm {0} exceeds 1 after normalisation")]
    NotBounded(f64),

    #[error("gradient hypothesis fails: certified |grad P| in [{lower:e}, {upper:e}], need [{kappa_lo:e}, {kappa_hi:e}]")]
    GradientHypothesisFails {
        lower: f64,
        upper: f64,
        kappa_lo: f64,
        kappa_hi: f64,
    },

    #[error("recursion depth {0} exceeded")]
    RecursionDepthExceeded(usize),

    #[error("H(Omega) = {h:e} is below sigma^3 = {floor:e}")]
    HPreconditionFails { h: f64, floor: f64 },

    #[error("decomposition failed validation: {0}")]
    ValidationFailed(String),

    #[error("node {index} at ({xi1}, {xi2}, {eta}) lies outside the declared support")]
    NodeOutsideSupport {
        index: usize,
        xi1: f64,
        xi2: f64,
        eta: f64,
    },

    #[error("node {0} lies in no parallelogram of the family")]
    UnassignedNode(usize),

    #[error("precondition failed: {0}")]
    PreconditionFails(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergent(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
