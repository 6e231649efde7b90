//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Graph`] is built fresh for every forward pass: leaves are added with
//! [`Graph::param`] or [`Graph::constant`], operations append nodes, and a
//! single [`Graph::backward`] call on a scalar node yields [`Gradients`].

mod gradcheck;
mod graph;
pub mod kernels;
mod tensor;

pub use gradcheck::{grad_check, grad_check_coords, RELATIVE_ERROR_FLOOR};
pub use graph::{Gradients, Graph, OpKind, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("invalid shape {shape:?}: every dimension must be positive")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} does not hold {len} values")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward already ran on this graph")]
    GraphConsumed,
    #[error("{0}")]
    InvalidArgument(String),
}
