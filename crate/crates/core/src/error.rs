use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vector norm {norm:e} is below the 1e-12 floor")]
    ZeroNorm { norm: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("{path}:{row}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),

    #[error("file truncated while reading {0}")]
    TruncatedFile(&'static str),

    #[error("{0} trailing bytes after payload")]
    TrailingData(usize),

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("id {0:?} not found")]
    NotFound(String),

    #[error("no embedding for record {0:?}")]
    MissingEmbedding(String),

    #[error("layer {layer} out of range (store has {n_layers} layers)")]
    LayerOutOfRange { layer: usize, n_layers: usize },

    #[error("sum of layer deltas is zero")]
    ZeroDenominator,

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("data mismatch: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ZeroNorm { .. } => "ZeroNorm",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::EmptyBatch => "EmptyBatch",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::BadMagic { .. } => "BadMagic",
            Error::VersionUnsupported(_) => "VersionUnsupported",
            Error::TruncatedFile(_) => "TruncatedFile",
            Error::TrailingData(_) => "TrailingData",
            Error::DuplicateId(_) => "DuplicateId",
            Error::NotFound(_) => "NotFound",
            Error::MissingEmbedding(_) => "MissingEmbedding",
            Error::LayerOutOfRange { .. } => "LayerOutOfRange",
            Error::ZeroDenominator => "ZeroDenominator",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::Config(_) => "Config",
            Error::Data(_) => "Data",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// True for errors caused by configuration rather than input data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidSpec(_) | Error::LayerOutOfRange { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
