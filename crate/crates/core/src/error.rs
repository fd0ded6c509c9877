use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}, line {line}: {detail}")]
    Malformed {
        context: String,
        line: usize,
        detail: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown dataset kind `{0}`")]
    UnknownDataset(String),

    #[error("no records in {0}")]
    NoRecords(String),

    #[error("record {record}: rating {rating} outside Likert range [{lo}, {hi}]")]
    RatingOutOfRange {
        record: usize,
        rating: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch ({context}): expected {expected}, found {found}")]
    DimMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("duplicate key ({0})")]
    DuplicateKey(String),

    #[error("missing features for {} id(s): {}", .0.len(), preview(.0))]
    MissingFeatures(Vec<String>),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad arguments rather than bad data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::UnknownDataset(_))
    }
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 8;
    let mut s = ids
        .iter()
        .take(SHOWN)
        .cloned()
        .collect::<Vec<_>>()
        .join(", ");
    if ids.len() > SHOWN {
        s.push_str(", ...");
    }
    s
}
