use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape {shape:?} holds {expected} values but {actual} were given")]
    ValueCount {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape {0:?} has a zero-length dimension")]
    EmptyDimension(Vec<usize>),
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("architecture id {0} is not one of 1..=7")]
    UnknownArchitecture(u8),
    #[error("architecture {id} cannot take input {input}")]
    IncompatibleInput { id: u8, input: String },
    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: usize, class_count: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("network does not end in a softmax output layer")]
    NoSoftmaxHead,
    #[error("need samples from at least two classes, found {0}")]
    SingleClass(usize),
    #[error("k = {k} exceeds the {n} stored points")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("split needs {requested} samples but the dataset has {available}")]
    SplitTooLarge { requested: usize, available: usize },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with a short description of the step that failed.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T> {
        self.map_err(|e| e.context(f()))
    }
}
