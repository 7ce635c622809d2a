use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at {location}: {detail}")]
    Format { location: String, detail: String },

    #[error("unknown stream id `{0}`")]
    UnknownStream(String),

    #[error("samples not sorted by timestamp in stream {stream}: {prev} ms followed by {next} ms")]
    Unsorted {
        stream: String,
        prev: u64,
        next: u64,
    },

    #[error("stream {stream} expects {expected} values, got {got}")]
    Dimension {
        stream: String,
        expected: usize,
        got: usize,
    },

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("coordinates never observed in training data: {0:?}")]
    UnobservedCoordinates(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("training set contains a single class ({0})")]
    SingleClass(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-parsable category, used for CLI exit lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } | Error::Json(_) => "format",
            Error::UnknownStream(_) | Error::Unsorted { .. } | Error::Dimension { .. } => "stream",
            Error::Layout(_) | Error::Shape(_) => "layout",
            Error::UnobservedCoordinates(_) | Error::SingleClass(_) | Error::Invalid(_) => "data",
            Error::Config(_) => "config",
            Error::NonFinite(_) | Error::Divergence { .. } => "numeric",
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
