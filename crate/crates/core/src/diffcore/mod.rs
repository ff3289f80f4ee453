//! Minimal differentiable-computation core for the two model families.
//!
//! Only the fixed set of operations the models need is supported: dense and
//! 2-D convolution layers, LeakyReLU/ReLU, a few reductions, and the loss
//! heads. Gradients are reverse-mode over a recorded tape. Training runs in
//! f32; gradient checking runs the same code in f64.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod init;
mod params;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, NodeId};
pub use init::glorot_uniform;
pub use params::{Activation, LayerSpec, LayoutDescriptor, NetworkParams};
pub use tensor::{Scalar, Tensor};
