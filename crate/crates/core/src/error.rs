use std::path::PathBuf;

/// Failures while decoding an EMB1 file.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected \"EMB1\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u32),
    #[error("truncated header: {0}")]
    TruncatedHeader(&'static str),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: u64, actual: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("invalid dimensions: {0}")]
    Dimensions(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate item id {0:?}")]
    DuplicateItem(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("items missing from embeddings: {}", .0.join(", "))]
    MissingItems(Vec<String>),

    #[error("pair keys with fewer than {required} exemplars: {}", .keys.join(", "))]
    DeficientExemplars { required: usize, keys: Vec<String> },

    /// A run record no longer matches the files or spec it describes.
    #[error("stale run record: {0}")]
    StaleRecord(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        Error::Format {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed inputs (files, manifests, configs)
    /// rather than by arithmetic on well-formed ones.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numeric(_) | Error::InvalidArgument(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
