//! Sequential network engine with hand-written backward passes.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use layers::Layer;
pub use network::{argmax_rows, build_arc_network, Mode, Network, NetworkSpec};
pub use tensor::{Real, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value after layer {layer}")]
    NonFinite { layer: String },
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
