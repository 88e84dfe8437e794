use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate rating for user {user}, item {item}: {first} and {second}")]
    DuplicateRating {
        user: u64,
        item: u64,
        first: u8,
        second: u8,
    },

    #[error("rating {rating} for user {user}, item {item} is outside [1, {max}]")]
    InvalidRating {
        user: u64,
        item: u64,
        rating: i64,
        max: u8,
    },

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} without observed ratings: {indices:?}")]
    NoRatings {
        what: &'static str,
        indices: Vec<usize>,
    },

    #[error("clustering failed: {0}")]
    Clustering(String),

    #[error("no eligible test pairs: {0}")]
    NoEligiblePairs(String),

    #[error("training diverged at iteration {iteration}: {reason}; try a smaller step length (alpha)")]
    Divergence { iteration: usize, reason: String },

    #[error("model is missing {0}")]
    MissingFactors(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by training.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Divergence { .. })
    }
}
