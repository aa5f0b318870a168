use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("basepoint mismatch: {left} vs {right}")]
    BasepointMismatch { left: f64, right: f64 },

    #[error("coefficient at exponent {exponent} is beyond truncation order {trunc}")]
    BeyondTruncation { exponent: i32, trunc: i32 },

    #[error("point ({re}, {im}) is within {radius:e} of a pole")]
    TooCloseToPole { re: f64, im: f64, radius: f64 },

    #[error("non-admissible pole at {location}: {reason}")]
    NonAdmissiblePole { location: f64, reason: String },

    #[error("log term required at {location}: obstruction {magnitude:e}")]
    LogTermRequired { location: f64, magnitude: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("repeated pole at ({re}, {im})")]
    RepeatedPole { re: f64, im: f64 },

    #[error("endpoint {0} coincides with a pole")]
    PoleAtEndpoint(f64),

    #[error("detour radius {radius} too large (limit {limit})")]
    RadiusTooLarge { radius: f64, limit: f64 },

    #[error("step size underflow at ({re}, {im})")]
    StepUnderflow { re: f64, im: f64 },

    #[error("non-finite state at ({re}, {im})")]
    Overflow { re: f64, im: f64 },

    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),

    #[error("potential is not periodic: {0}")]
    Aperiodic(String),

    #[error("residue obstruction at {pole}: coefficient ({re}, {im})")]
    ResidueObstruction { pole: f64, re: f64, im: f64 },

    #[error("gram matrix not Hermitian: skew part {skew:e} exceeds {tol:e}")]
    NonHermitian { skew: f64, tol: f64 },

    #[error("linearly dependent principal parts")]
    DependentSet,

    #[error("evaluation outside handle domain: {0}")]
    Domain(String),

    #[error("refinement grid too coarse near lambda = {0}")]
    GridTooCoarse(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
