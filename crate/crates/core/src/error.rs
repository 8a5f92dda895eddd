use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("invalid convex body: {0}")]
    InvalidBody(String),

    #[error("invalid cost model: {0}")]
    InvalidCost(String),

    #[error("unknown cost family `{0}`")]
    UnknownFamily(String),

    #[error("direction is not internal at the given point: {0}")]
    NotInternal(String),

    #[error("point is not on the boundary of the body (gauge {0})")]
    NotOnBoundary(f64),

    #[error("invalid difference schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid transport plan: {0}")]
    InvalidPlan(String),

    #[error("middle marginals disagree at atom {index}: {left} vs {right}")]
    MarginalMismatch { index: usize, left: f64, right: f64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("result is infeasible at t = {0}")]
    Infeasible(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
