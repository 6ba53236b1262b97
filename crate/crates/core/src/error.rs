use std::fmt;
use std::path::PathBuf;

use crate::io::ArtifactRole;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The tensor file does not follow the interchange layout.
    #[error("malformed tensor data at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("unsupported dtype descriptor {0:?} (expected '<f4' or '<f8')")]
    UnsupportedDtype(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(ArtifactRole),

    #[error("shape mismatch for {what}: expected {expected:?}, got {got:?}")]
    Shape {
        what: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    /// Every violation found while validating a manifest.
    #[error("invalid manifest:{}", Issues(.0))]
    Manifest(Vec<Error>),

    #[error("manifest line {line}: {reason}")]
    ManifestSyntax { line: usize, reason: String },

    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("pair ({i}, {j}) is not ordered i < j < n = {n}")]
    Order { i: usize, j: usize, n: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("pair ({i}, {j}): {source}")]
    Pair {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mask selects {selected} entries; at least 3 are required")]
    MaskTooSmall { selected: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("mask removes every feature map")]
    EmptyMask,

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("no feature map has a positive alignment importance score")]
    NoPositiveAis,

    #[error("map is constant; percentile masks are undefined")]
    DegenerateMap,

    #[error("sample is empty")]
    EmptySample,

    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(what: impl Into<String>, expected: &[usize], got: &[usize]) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }

    /// Flattens a manifest error into its individual violations.
    pub fn issues(&self) -> Vec<&Error> {
        match self {
            Error::Manifest(list) => list.iter().flat_map(|e| e.issues()).collect(),
            other => vec![other],
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Format { .. } => "FormatError",
            Error::UnsupportedDtype(_) => "UnsupportedDtype",
            Error::MissingArtifact(_) => "MissingArtifact",
            Error::Shape { .. } => "ShapeError",
            Error::Manifest(_) => "ManifestError",
            Error::ManifestSyntax { .. } => "ManifestSyntax",
            Error::InvalidValue { .. } => "InvalidValue",
            Error::Order { .. } => "OrderError",
            Error::ZeroVector => "ZeroVectorError",
            Error::Pair { source, .. } => source.kind(),
            Error::MaskTooSmall { .. } => "MaskTooSmall",
            Error::Domain(_) => "DomainError",
            Error::EmptyMask => "EmptyMask",
            Error::InvalidMask(_) => "InvalidMask",
            Error::NoPositiveAis => "NoPositiveAis",
            Error::DegenerateMap => "DegenerateMap",
            Error::EmptySample => "EmptySample",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

struct Issues<'a>(&'a [Error]);

impl fmt::Display for Issues<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}
