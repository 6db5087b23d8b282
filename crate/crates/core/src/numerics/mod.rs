//! Dense double-precision tensors with reverse-mode differentiation.

mod checkpoint;
mod gradcheck;
mod graph;
mod init;
mod lstm;
mod optim;
mod params;
mod tensor;

pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, grad_check_store, FD_STEP};
pub use graph::{softmax_rows, Conv2dSpec, Graph, Var};
pub use init::{param_seed, seeded_init, Init};
pub use lstm::{lstm_cell, LstmWeights};
pub use optim::Adam;
pub use params::{Param, ParamId, ParamStore};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
