//! Dense tensors, the differentiation tape, and the Adam optimizer.

mod adam;
pub mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub(crate) use graph::softmax_in_place;
pub use graph::{sigmoid, Function, Graph, Var};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
