//! File formats, experiment manifests, the experiment runner and report
//! rendering on top of `nnhybrid-core`.

pub mod codec;
pub mod error;
pub mod idx;
pub mod manifest;
pub mod report;
pub mod runner;
pub mod tabular;

pub use error::{Error, FieldError, Result};
