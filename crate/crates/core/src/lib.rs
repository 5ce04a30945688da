//! Numeric core of a two-stream (RGB + flow) multi-task recurrent video
//! classifier: a reverse-mode tensor tape, the layers and SGD regime the
//! model trains with, assembly of the three staged network forms, and the
//! checkpoint container that carries weights between stages.
//!
//! Everything is generic over the scalar type via [`Scalar`]; gradient
//! verification runs in `f64`, training defaults to `f32`.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod optim;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::{CoreError, Result};
pub use scalar::{fnv1a64, Scalar};
pub use tape::{Tape, TensorId};
pub use tensor::Tensor;

/// Concrete aliases for the two supported scalar types.
pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
pub type Network32 = network::Network<f32>;
pub type Network64 = network::Network<f64>;
pub type Checkpoint32 = checkpoint::NetworkCheckpoint<f32>;
pub type Checkpoint64 = checkpoint::NetworkCheckpoint<f64>;
