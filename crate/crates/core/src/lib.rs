//! Hyperdimensional computing classifiers, the two-layer dense network they
//! correspond to, and the tooling to move between the two.
//!
//! A record-based HDC encoder is a matrix-vector product with the item
//! memory, followed by a nonlinearity; similarity against the associative
//! memory is a second matrix-vector product. The same graph, read as a
//! network, is `softmax(W2 tanh(W1^T x))`. This crate trains either form and
//! can [`transplant::derive`] an HDC model from a trained network.

pub mod bench;
pub mod container;
pub mod dataset;
pub mod encoder;
mod error;
pub mod hv;
pub mod kernels;
pub mod memory;
pub mod model;
pub mod nn;
pub mod transplant;

pub use error::{Error, Result};
pub use hv::Hypervector;
