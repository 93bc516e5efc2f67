use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value produced at index {index}")]
    NonFinite { index: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("channel layout error: {0}")]
    Layout(String),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: malformed file: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("{}: unsupported format version {found} (supported: {supported})", path.display())]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    #[error("{}: checksum mismatch", path.display())]
    ChecksumMismatch { path: PathBuf },

    #[error("{}: file not found", path.display())]
    MissingFile { path: PathBuf },

    #[error("{}: bad magic 0x{found:08x} (expected 0x{expected:08x})", path.display())]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{}: truncated payload ({found} of {expected} bytes)", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{}: expected {expected} items, found {found}", path.display())]
    CountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{}: length {len} is not a multiple of the {record}-byte record size", path.display())]
    Misaligned {
        path: PathBuf,
        len: u64,
        record: usize,
    },

    #[error("{}: record {index} has label {value}", path.display())]
    BadLabel {
        path: PathBuf,
        index: usize,
        value: u8,
    },

    #[error("transplant equivalence breached: {mismatches} of {samples} predictions differ")]
    EquivalenceBreach { mismatches: usize, samples: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
