use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({u}, {v}) is not strictly inside the unit disk")]
    InvalidPoint { u: f64, v: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("geodesic left the numerically representable disk at t = {t}")]
    BoundaryReached { t: f64 },

    #[error("reduction did not terminate for ({u}, {v}) after {steps} steps")]
    BoundaryPathology { u: f64, v: f64, steps: usize },

    #[error("time horizon needs a group ball of radius {required:.3}, maximum is {max:.3}")]
    HorizonTooLarge { required: f64, max: f64 },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("admissibility: {0}")]
    Admissibility(String),

    #[error("outside the propagated domain: {0}")]
    NotInDomain(String),

    #[error("quadrature did not reach tolerance {requested:e}; achieved estimate {achieved:e}")]
    Tolerance { achieved: f64, requested: f64 },

    #[error("validation: {0}")]
    Validation(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidPoint { .. } => "invalid_point",
            Error::Invariant(_) => "invariant",
            Error::BoundaryReached { .. } => "boundary_reached",
            Error::BoundaryPathology { .. } => "boundary_pathology",
            Error::HorizonTooLarge { .. } => "horizon_too_large",
            Error::Resource(_) => "resource",
            Error::Admissibility(_) => "admissibility",
            Error::NotInDomain(_) => "not_in_domain",
            Error::Tolerance { .. } => "tolerance",
            Error::Validation(_) => "validation",
            Error::DegenerateSample(_) => "degenerate_sample",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// 2 for anything caught before the run starts, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Admissibility(_) | Error::Config(_) | Error::Validation(_) => 2,
            _ => 1,
        }
    }
}
