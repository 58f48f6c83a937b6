//! Dense tensors, reverse-mode differentiation and optimisation.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod param;
pub mod tensor;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, DType};
pub use graph::{Gradients, Graph, Var};
pub use param::{Init, ParamGrads, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

/// Scalar type for every tensor. 64-bit by default; the `single-precision`
/// feature switches training builds to 32-bit.
#[cfg(not(feature = "single-precision"))]
pub type Real = f64;
#[cfg(feature = "single-precision")]
pub type Real = f32;

/// Epsilon inside the layer-norm square root.
pub const LAYER_NORM_EPS: Real = 1e-5;
