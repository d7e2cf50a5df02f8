use thiserror::Error;

/// Location and message of a syntax error in a model file or expression.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),

    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),

    #[error("unknown delay slot {slot} (model has {slots} slots)")]
    UnknownDelaySlot { slot: usize, slots: usize },

    #[error("unknown state component {component} (model dimension is {dim})")]
    UnknownComponent { component: usize, dim: usize },

    #[error("delay {slot} references slot {referenced}, which is not evaluated before it")]
    ForwardDelayReference { slot: usize, referenced: usize },

    #[error("the first delay must be the literal 0")]
    FirstDelayNotZero,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("delay out of range: slot {slot} has delay {value}")]
    DelayOutOfRange { slot: usize, value: f64 },

    #[error("derivative order {0} exceeds the supported maximum")]
    OrderTooHigh(usize),

    #[error("invalid settings: {0}")]
    InvalidSettings(String),

    #[error("base point is not an equilibrium (residual {0:e})")]
    NotAnEquilibrium(f64),

    #[error("Newton iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("non-semisimple or degenerate critical root")]
    NonSemisimple,

    #[error("no characteristic root near {0}")]
    NoNearbyRoot(String),

    #[error("resonant Hopf: {0}")]
    Resonance(&'static str),

    #[error(
        "no zero root: the characteristic matrix at 0 is regular (smallest singular value {0:e})"
    )]
    NoZeroRoot(f64),

    #[error("derivative accuracy insufficient (Richardson discrepancy {0:e})")]
    DerivativeAccuracy(f64),

    #[error("contour encloses characteristic roots other than the critical ones")]
    ContourEnclosesExtraRoots,

    #[error("homological system is rank deficient")]
    RankDeficient,

    #[error("continuation step size underflow at step {0:e}")]
    StepUnderflow(f64),

    #[error("fixed-point iteration for short delays did not converge at t = {0}")]
    FixedPoint(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
