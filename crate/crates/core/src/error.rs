use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // XEB1 decoding
    #[error("bad magic: expected \"XEB1\", found {found:02x?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("unknown modality code {0}")]
    UnknownModality(u8),
    #[error("truncated payload: {0}")]
    Truncated(String),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("id #{index} is not valid UTF-8")]
    InvalidUtf8 { index: usize },
    #[error("id {id:?} is {len} bytes, longer than the 65535-byte limit")]
    IdTooLong { id: String, len: usize },

    // EmbeddingSet invariants
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("non-finite value at row {row} ({id:?}), column {col}")]
    NonFinite { id: String, row: usize, col: usize },
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("shape mismatch: {0}")]
    Shape(String),

    // manifests and corpora
    #[error("manifest line {line}: {reason}")]
    ManifestSyntax { line: usize, reason: String },
    #[error("unresolved id {id:?} ({side} side)")]
    UnresolvedId { id: String, side: &'static str },
    #[error("duplicate manifest relation for {id:?} in one-to-one mode (line {line})")]
    DuplicateRelation { id: String, line: usize },
    #[error("{id:?} has more than {limit} relevant items")]
    TooManyRelations { id: String, limit: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),

    // metrics and geometry
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
    #[error("zero-norm vector{}", .id.as_ref().map(|i| format!(" {i:?}")).unwrap_or_default())]
    ZeroNorm { id: Option<String> },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid batch size {batch_size} for {count} items")]
    BatchSize { batch_size: usize, count: usize },

    // retrieval
    #[error("k = {k} out of range (1..={max})")]
    KOutOfRange { k: usize, max: usize },
    #[error("query {0:?} missing from relevance map")]
    MissingQuery(String),

    // scorer
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    ModelFormat(String),

    // stats
    #[error("invalid proportion sample {label:?}: {successes}/{trials}")]
    Proportion { label: String, successes: u64, trials: u64 },
    #[error("p-value {0} outside [0, 1]")]
    PValue(f64),
}

impl Error {
    /// Stable machine-readable code, used by the CLI on stderr.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::BadMagic { .. } => "bad_magic",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::UnsupportedDtype(_) => "unsupported_dtype",
            Error::UnknownModality(_) => "unknown_modality",
            Error::Truncated(_) => "truncated",
            Error::TrailingBytes(_) => "trailing_bytes",
            Error::InvalidUtf8 { .. } => "invalid_utf8",
            Error::IdTooLong { .. } => "id_too_long",
            Error::DuplicateId(_) => "duplicate_id",
            Error::NonFinite { .. } => "non_finite",
            Error::ZeroDim => "zero_dim",
            Error::Shape(_) => "shape",
            Error::ManifestSyntax { .. } => "manifest_syntax",
            Error::UnresolvedId { .. } => "unresolved_id",
            Error::DuplicateRelation { .. } => "duplicate_relation",
            Error::TooManyRelations { .. } => "too_many_relations",
            Error::InvalidSplit(_) => "invalid_split",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::CountMismatch { .. } => "count_mismatch",
            Error::ZeroNorm { .. } => "zero_norm",
            Error::Empty(_) => "empty",
            Error::BatchSize { .. } => "batch_size",
            Error::KOutOfRange { .. } => "k_out_of_range",
            Error::MissingQuery(_) => "missing_query",
            Error::Architecture(_) => "architecture",
            Error::Config(_) => "config",
            Error::ModelFormat(_) => "model_format",
            Error::Proportion { .. } => "proportion",
            Error::PValue(_) => "p_value",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
