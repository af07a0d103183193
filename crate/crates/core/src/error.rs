use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid band range: j_min = {j_min} > j_max = {j_max}")]
    InvalidBandRange { j_min: i32, j_max: i32 },
    #[error("invalid cutoff radii: inner = {inner}, outer = {outer}")]
    InvalidCutoff { inner: f64, outer: f64 },
    #[error("invalid patch: {0}")]
    InvalidPatch(String),
    #[error("component count mismatch: {left} vs {right}")]
    ComponentMismatch { left: usize, right: usize },
    #[error("incompatible spacings {0} and {1}")]
    IncompatibleSpacing(f64, f64),
    #[error("patch support at {center:?} reaches the singular point of the symbol (exclusion radius {radius})")]
    SupportTouchesSingularity { center: [f64; 3], radius: f64 },
    #[error("undersampled synthesis: spacing {dx} exceeds {limit}")]
    Undersampled { dx: f64, limit: f64 },
    #[error("tail budget exceeded: shell mass {tail} > {budget}")]
    TailBudgetExceeded { tail: f64, budget: f64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("infeasible parameters; violated: {0:?}")]
    Infeasible(Vec<String>),
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),
    #[error("empty time grid")]
    EmptyTimeGrid,
    #[error("fit needs at least {needed} positive rows, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("non-positive value {value} at N = {n}")]
    NonPositive { n: f64, value: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
