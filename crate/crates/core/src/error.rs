use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trajectory component: {0}")]
    InvalidComponent(String),

    #[error("innovation covariance is singular (reciprocal condition {rcond:e})")]
    SingularInnovation { rcond: f64 },

    #[error("degenerate mixture: total weight is zero")]
    DegenerateMixture,

    #[error("impossible measurement set: cardinality normaliser is zero")]
    ImpossibleMeasurement,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trajectory metric intractable: {states} assignment states exceed cap {cap}")]
    MetricIntractable { states: usize, cap: usize },

    #[error("filter failed at step {step}: {source}")]
    FilterStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidComponent(_) => "invalid-component",
            Error::SingularInnovation { .. } => "singular-innovation",
            Error::DegenerateMixture => "degenerate-mixture",
            Error::ImpossibleMeasurement => "impossible-measurement",
            Error::Config(_) => "config",
            Error::MetricIntractable { .. } => "metric-intractable",
            Error::FilterStep { .. } => "filter",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
