use std::path::PathBuf;

/// Every failure the pipeline can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("truncated header")]
    TruncatedHeader,

    #[error("trailing data: {0} bytes after payload")]
    TrailingBytes(usize),

    #[error("parameter length mismatch: architecture needs {expected} floats, blob holds {found}")]
    ParameterLength { expected: usize, found: usize },

    #[error("unknown layer kind `{0}`")]
    UnknownLayerKind(String),

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("backward requested without cached forward activations")]
    NoForwardCache,

    #[error("insufficient frames: have {have}, need {need}")]
    InsufficientFrames { have: usize, need: usize },

    #[error("empty artifact mask")]
    EmptyMask,

    #[error("degenerate injector: {0}")]
    DegenerateInjector(String),

    #[error("dataset contains a single class")]
    SingleClass,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("class ratio {ratio:.3} outside [0.4, 0.6]; pass --allow-imbalanced to report anyway")]
    Imbalanced { ratio: f64 },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for data errors, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
