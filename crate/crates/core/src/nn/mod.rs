//! Dense tensors, reverse-mode gradients and the graph layers built on them.

mod checkpoint;
mod gradcheck;
pub mod layers;
pub mod loss;
mod optim;
mod tape;
mod tensor;

use thiserror::Error;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, REL_ERROR_FLOOR};
pub use layers::{
    decode_probabilities, gat_aggregate, gat_layer, gat_layer_with_attention, gcn_layer, gcn_propagate,
    inner_product_decode, AttentionEdges,
};
pub use loss::{bce, cross_entropy, kl_divergence};
pub use optim::{adam_step, Bound, ModelState, Param};
pub use tape::{sigmoid, softplus, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("index {index} out of range (< {bound}) in {op}")]
    Index { op: &'static str, index: usize, bound: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("optimizer error: {0}")]
    Optimizer(String),
    #[error("unknown parameter {0}")]
    MissingParam(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
