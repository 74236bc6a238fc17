//! Reverse-mode automatic differentiation over dense row-major 2-D tensors,
//! with MLP layers, Adam and a binary checkpoint container.

mod adam;
pub mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
mod nn;
mod scalar;
mod tensor;

pub use adam::{Adam, NonFinitePolicy};
pub use checkpoint::Checkpoint;
pub use error::{AutodiffError, Result};
pub use graph::{Gradients, Graph, Var};
pub use nn::{Activation, Linear, Mlp, MlpVars};
pub use scalar::Scalar;
pub use tensor::Tensor;
