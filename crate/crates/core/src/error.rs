use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no grid point lies inside the support ({low}, {high})")]
    EmptySupportOverlap { low: f64, high: f64 },

    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("empty extremization domain: {0}")]
    EmptyDomain(String),

    #[error("invalid psi function: {0}")]
    InvalidPsi(String),

    #[error("invalid moment curve: {0}")]
    InvalidCurve(String),

    #[error("metric space has no points")]
    EmptySpace,

    #[error("exact covering is capped at {cap} points, space has {n}")]
    TooLarge { n: usize, cap: usize },

    #[error("invalid metric space: {0}")]
    InvalidMetric(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("tail second moment did not stabilize: {0}")]
    NonIntegrable(String),

    #[error("invalid tail function: {0}")]
    InvalidTail(String),

    #[error("requested n = {n} exceeds the model horizon {horizon}")]
    HorizonExceeded { n: usize, horizon: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid entropy profile: {0}")]
    InvalidProfile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
