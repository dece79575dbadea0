use thiserror::Error;

/// Errors shared by all lab modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cylinder of radius {r} is not resolvable on the grid (need r >= 2h and r^2 >= 2 dt)")]
    UnresolvableCylinder { r: f64 },

    #[error("dyadic cube estimator needs Nx >= 8, got {nx}")]
    UnresolvableCube { nx: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("coefficients are not parabolic: smallest form eigenvalue {lambda} <= 0")]
    NotParabolic { lambda: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("coefficient set was not validated before operator assembly")]
    NotValidated,

    #[error("linear solve failed: relative residual {residual:.3e} after {iters} iterations")]
    LinearSolveFailure { residual: f64, iters: usize },

    #[error("time range error: {0}")]
    TimeRangeError(String),

    #[error("source out of range: {0}")]
    SourceOutOfRange(String),

    #[error("probe out of range: {0}")]
    ProbeOutOfRange(String),

    #[error("range error: {0}")]
    RangeError(String),

    #[error("oracle kernel evaluated at non-causal time t <= s")]
    NonCausal,

    #[error("gaussian fit window contains no usable points")]
    EmptyWindow,

    #[error("gaussian fit is degenerate: all points share the same |x-y|^2/(t-s)")]
    DegenerateFit,

    #[error("invalid paper constants: {0}")]
    InvalidConstants(String),

    #[error("twist anchors too close: |x-y| = {d} < 4h")]
    AnchorsTooClose { d: f64 },

    #[error("twist anchors violate the wrap scale: |x-y| = {d} > L/4")]
    WrapViolation { d: f64 },

    #[error("config error: {0}")]
    ConfigError(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
