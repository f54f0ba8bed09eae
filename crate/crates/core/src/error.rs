use thiserror::Error;

/// Errors raised by the rotation-set toolkit.
///
/// Dynamical failures (a map that is not injective, a pseudo-orbit that
/// overshoots its tolerance) are reported in result records; only
/// structural problems and violated preconditions end up here.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty point set")]
    EmptyPointSet,
    #[error("zero direction")]
    ZeroDirection,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid too coarse: step {step} exceeds tolerance {delta}")]
    GridTooCoarse { step: f64, delta: f64 },
    #[error("edge-label overflow: |w| = {magnitude} exceeds bound {bound}")]
    LabelOverflow { magnitude: i64, bound: i64 },
    #[error("no cycles: empty pseudo-rotation set at this resolution")]
    NoCycles,
    #[error("invalid cycle: {0}")]
    InvalidCycle(String),
    #[error("non-finite value in map evaluation at ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("patch infeasible at this epsilon: {0}")]
    PatchInfeasible(String),
    #[error("relocation map is not injective")]
    NotInjective,
    #[error("coprimality violated: {0}")]
    CoprimalityViolated(String),
    #[error("realization unavailable: no periodic orbit for {target} (best residual {residual:e})")]
    RealizationUnavailable { target: String, residual: f64 },
    #[error("estimate P too large: neither {v0} nor {v1} lies outside the polygon")]
    EstimateTooLarge { v0: String, v1: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("deviation bound requires epsilon < 1 (got {0})")]
    EpsilonTooLarge(f64),
    #[error("arithmetic overflow: {0}")]
    Overflow(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl Error {
    /// Stable kebab-case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyPointSet => "empty-point-set",
            Error::ZeroDirection => "zero-direction",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::GridTooCoarse { .. } => "grid-too-coarse",
            Error::LabelOverflow { .. } => "label-overflow",
            Error::NoCycles => "no-cycles",
            Error::InvalidCycle(_) => "invalid-cycle",
            Error::NonFinite(..) => "non-finite",
            Error::PatchInfeasible(_) => "patch-infeasible",
            Error::NotInjective => "not-injective",
            Error::CoprimalityViolated(_) => "coprimality-violated",
            Error::RealizationUnavailable { .. } => "realization-unavailable",
            Error::EstimateTooLarge { .. } => "estimate-too-large",
            Error::Precondition(_) => "precondition",
            Error::EpsilonTooLarge(_) => "epsilon-too-large",
            Error::Overflow(_) => "overflow",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
