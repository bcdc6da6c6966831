use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{m} rows cannot be split evenly across {n} workers")]
    NonDivisible { m: usize, n: usize },

    #[error("shard of worker {worker_id} does not belong to this dataset")]
    ForeignShard { worker_id: usize },

    #[error("least-squares system is rank deficient (numerical rank {rank} < {d})")]
    RankDeficient { rank: usize, d: usize },

    #[error("k = {k} is out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("invalid response-time model: {0}")]
    InvalidModel(String),

    #[error("invalid bound parameters: {0}")]
    InvalidParams(String),

    #[error("order-statistic means are equal at k = {k} (mu_k = mu_(k+1) = {mean}); switching times are undefined")]
    EqualOrderStatMeans { k: usize, mean: f64 },

    #[error("empty time grid")]
    EmptyGrid,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
