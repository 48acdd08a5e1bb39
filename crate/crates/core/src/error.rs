use std::path::PathBuf;

/// Errors raised anywhere in the game, learners or harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible follower action: {layers} layers need {compute} units but capacity is {capacity}")]
    InfeasibleAction {
        layers: u32,
        compute: f64,
        capacity: f64,
    },
    #[error("price {price} outside [{min}, {max}]")]
    PriceOutOfBounds { price: f64, min: f64, max: f64 },
    #[error("empty device set")]
    NoDevices,
    #[error("degenerate cost profile: cumulative costs are all identical")]
    DegenerateProfile,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: {what}")]
    Diverged { epoch: usize, what: String },
    #[error("unknown solver `{0}`")]
    UnknownSolver(String),
    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
