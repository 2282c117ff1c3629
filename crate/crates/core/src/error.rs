use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("branch points {0} and {1} coincide within tolerance")]
    DuplicateBranchPoint(usize, usize),
    #[error("expected {expected} branch points, got {got}")]
    BadCount { expected: usize, got: usize },
    #[error("invalid curve parameters: {0}")]
    BadParameters(String),
    #[error("path passes within clearance of branch point {0}")]
    PathTooClose(usize),
    #[error("argument tracking lost precision")]
    PrecisionLoss,
    #[error("form is singular at branch point {0}")]
    PoleAtBranchPoint(usize),
    #[error("local extrapolation did not converge: {0}")]
    NonConvergent(String),
    #[error("evaluation point hits a pole")]
    PoleHit,
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("coincident projections z(x) = z(y)")]
    CoincidentProjection,
    #[error("curve has genus zero")]
    GenusZero,
    #[error("cycle does not close on the cover")]
    NonClosedCycle,
    #[error("intersection pairing has rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("form has a pole on the integration path")]
    PoleOnPath,
    #[error("quadrature did not converge")]
    NoConvergence,
    #[error("A-period matrix is numerically singular (condition {0:e})")]
    SingularAMatrix(f64),
    #[error("repeated entry in p-set")]
    DegenerateVandermonde,
    #[error("L = {ell} exceeds the available cycles ({available})")]
    GenusTooSmall { ell: usize, available: usize },
    #[error("finite-difference step too large for the cycle geometry")]
    StepTooLarge,
    #[error("partition count {0} exceeds the enumeration cap")]
    Overflow(String),
    #[error("real part of tau is not negative definite")]
    NotNegativeDefinite,
    #[error("theta value vanishes at the requested point")]
    Underflow,
    #[error("no characteristic passes the A-period identity")]
    NoCandidate,
    #[error("{0} characteristics pass the A-period identity")]
    Ambiguous(usize),
    #[error("theta constant vanishes for this characteristic")]
    SingularCharacteristic,
    #[error("operation requires N = 2, got N = {0}")]
    WrongN(usize),
    #[error("index constraints violated: {0}")]
    BadIndices(String),
    #[error("could not sample a denominator-safe point")]
    DegenerateSampling,
    #[error("input error: {0}")]
    Input(String),
}

impl Error {
    /// True for failures caused by malformed input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DuplicateBranchPoint(..)
                | Error::BadCount { .. }
                | Error::BadParameters(_)
                | Error::InvalidIndex(_)
                | Error::BadIndices(_)
                | Error::WrongN(_)
                | Error::Input(_)
                | Error::DegenerateVandermonde
                | Error::GenusTooSmall { .. }
                | Error::GenusZero
                | Error::Overflow(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
