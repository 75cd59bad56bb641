use thiserror::Error;

#[derive(Debug, Error)]
pub enum LdlaError {
    #[error("invalid step law: {0}")]
    InvalidLaw(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("poor tail fit: max relative residual {residual:.3e} exceeds {limit:.3e}")]
    TailFit { residual: f64, limit: f64 },

    #[error("singular hitting system for points {points:?}")]
    SingularSystem { points: Vec<i64> },

    #[error("hitting-system residual {residual:.3e} above tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("kernel/solve inconsistency: g_infinity({x}) = {value:.3e}")]
    NegativeGreen { x: i64, value: f64 },

    #[error("point {0} is already in the aggregate")]
    PointInAggregate(i64),

    #[error("gluing tail could not be certified: {0}")]
    TailCertification(String),

    #[error("sampler aborted after {proposals} proposals: {reason}")]
    SamplerAborted { proposals: u64, reason: String },

    #[error("direct sampler exceeded {relaunches} relaunches")]
    TooManyRelaunches { relaunches: u64 },

    #[error("coordinate overflow at {0}")]
    Overflow(String),

    #[error("feasibility bound reached: {0}")]
    Feasibility(String),

    #[error("checkpoint refused: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LdlaError>;
