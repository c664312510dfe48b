use std::fmt;
use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One problem found while validating a run manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: bad magic {found:#010x}, expected {expected:#010x}", path.display())]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{}: truncated, need {expected} bytes but the file has {actual}", path.display())]
    Truncated { path: PathBuf, expected: u64, actual: u64 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{}: row {row} has {found} columns, expected {expected}", path.display())]
    RaggedRow { path: PathBuf, row: usize, expected: usize, found: usize },
    #[error("{}: row {row} column {column}: {value:?} is not a number", path.display())]
    NonNumeric { path: PathBuf, row: usize, column: usize, value: String },
    #[error("{}: row {row}: label {value:?} is not an integer", path.display())]
    NonIntegerLabel { path: PathBuf, row: usize, value: String },
    #[error("{}: no data rows", .0.display())]
    EmptyFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: unsupported {kind} format version {version}", path.display())]
    UnsupportedVersion { path: PathBuf, kind: &'static str, version: u16 },
    #[error("{}: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },
    #[error("invalid manifest:\n{}", format_fields(.0))]
    Manifest(Vec<FieldError>),
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Core(#[from] nnhybrid_core::Error),
}

fn format_fields(fields: &[FieldError]) -> String {
    fields.iter().map(|f| format!("  {f}")).collect::<Vec<_>>().join("\n")
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
