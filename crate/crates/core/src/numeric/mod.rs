//! Minimal reverse-mode autodiff engine: tensors, primitives, parameters,
//! the Adam optimizer and checkpoint files.

pub mod checkpoint;
mod conv;
mod graph;
mod lstm;
mod params;
mod tensor;

pub use graph::{logistic, Graph, Var};
pub use lstm::{lstm_cell, LstmParams};
pub use params::{adam_step, variance_scaled, Adam, Gradients, Param, ParamId, ParamStore, INIT_SCALE};
pub use tensor::Tensor;
