//! Numeric core for training convolutional and fully-connected networks,
//! turning them into feature extractors, and classifying raw or extracted
//! features with an RBF support vector machine or k-nearest neighbours.
//!
//! The crate is `no_std` and only needs an allocator. All transcendental
//! functions go through [`libm`] so results are bit-identical across hosts,
//! and all randomness comes from explicitly seeded ChaCha generators.

#![no_std]

extern crate alloc;

pub mod classifiers;
pub mod data;
mod error;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
