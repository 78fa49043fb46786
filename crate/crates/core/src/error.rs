use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("time scale has no segments")]
    EmptyScale,
    #[error("non-finite endpoint {0}")]
    NonFinite(f64),
    #[error("segment [{0}, {1}] has a > b")]
    InvertedSegment(f64, f64),
    #[error("{0} is not a member of the time scale")]
    NotMember(f64),
    #[error("trimming would leave an empty time scale")]
    DegenerateScale,
    #[error("bad window [{0}, {1}]")]
    BadWindow(f64, f64),

    #[error("syntax error at offset {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("domain error in `{0}`")]
    Domain(String),
    #[error("`{0}` is not differentiable")]
    NotDifferentiable(String),

    #[error("{0} is outside the kappa-trimmed scale")]
    OutsideKappa(f64),
    #[error("no sample at t = {0}")]
    MissingSample(f64),

    #[error("control {0:?} is outside the control set")]
    InfeasibleControl(Vec<f64>),
    #[error("no feasible control at t = {t} (best residual {best_residual:e})")]
    NoFeasibleControl { t: f64, best_residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid control set: {0}")]
    InvalidControlSet(String),

    #[error("solution blew up at t = {0}")]
    BlowUp(f64),
    #[error("implicit step failed to converge at t = {0}")]
    ImplicitSolveFailed(f64),
    #[error("step at t = {0} is not regressive (singular Jacobian)")]
    NonRegressive(f64),
    #[error("calculus mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("boundary is not a strict-egress set; pass an override to search anyway")]
    NoEgressCertificate,
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
