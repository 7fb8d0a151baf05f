//! A small sequential neural-network engine: NHWC tensors, exact
//! forward/backward passes for every layer the autoencoders use, MSE loss
//! and Adam.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod dense;
mod gemm;
pub mod layer;
pub mod loss;
pub mod network;
pub mod norm;
pub mod pool;
pub mod reshape;
pub mod tensor;

pub use activation::{Activation, ActivationKind};
pub use adam::{adam_step, AdamState};
pub use conv::{Conv2d, ConvTranspose2d};
pub use dense::Dense;
pub use layer::{Layer, LayerSpec, Mode, Param};
pub use loss::mse_loss;
pub use network::{build_layer, Sequential};
pub use norm::BatchNorm;
pub use pool::MaxPool2d;
pub use reshape::{ChannelMean, Flatten, Reshape};
pub use tensor::Tensor;
