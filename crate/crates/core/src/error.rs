use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("policy has no action for state {state} at timestep {timestep}")]
    PolicyUndefined { state: usize, timestep: usize },

    #[error("utility family {family} cannot be used here: {reason}")]
    WrongFamily { family: &'static str, reason: &'static str },

    #[error("return distribution is empty")]
    EmptyDistribution,

    #[error("invalid return distribution: {0}")]
    InvalidDistribution(String),

    #[error("alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("invalid utility parameters: {0}")]
    InvalidUtility(String),

    #[error("enumeration exceeded cap of {cap} {what}")]
    ExplosionCap { what: &'static str, cap: u64 },

    #[error("augmented state space exceeded cap of {cap} (state, accumulated return) pairs")]
    BinExplosion { cap: usize },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("return {value} falls outside the categorical support [{lo}, {hi}]")]
    SupportTooNarrow { value: f64, lo: f64, hi: f64 },

    #[error("invalid environment geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid environment parameters: {0}")]
    InvalidParams(String),

    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),

    #[error("grid point {index} (param {param}): {source}")]
    GridPoint {
        index: usize,
        param: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed id `{0}`")]
    InvalidId(String),

    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },

    #[error("parameter {value} lies outside the grid range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("parameter {0} is not a grid point")]
    OffGrid(f64),

    #[error("store entry already exists: {0}")]
    Conflict(PathBuf),

    #[error("storage full while writing {0}")]
    StorageFull(PathBuf),

    #[error("malformed decimal `{0}`")]
    Decimal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_grid_point(self, index: usize, param: f64) -> Self {
        Error::GridPoint {
            index,
            param: crate::decimal::format(param),
            source: Box::new(self),
        }
    }
}
