//! Reverse-mode automatic differentiation over dense CPU tensors.
//!
//! A [`Graph`] records operations on [`Var`] handles as they execute; calling
//! [`Graph::backward`] on a scalar node returns gradients for every leaf that
//! requires one. Tensors are generic over [`Scalar`] (`f32` for training,
//! `f64` for deterministic checks).

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use optim::Adam;
pub use params::{Bound, ParamStore};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
