//! Minimal CPU neural-network engine.
//!
//! Tensors are dense NCHW arrays. Every layer has an explicit backward pass;
//! there is no autograd graph. Layers are generic over [`Scalar`] so the same
//! code runs in f32 for training and in f64 for gradient checking.

mod activation;
mod adam;
mod checkpoint;
mod conv;
mod gradcheck;
mod loss;
mod network;
mod pool;
mod scalar;
mod tensor;

pub use activation::Activation;
pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    decode_layers, encode_layers, load_layers, save_layers, FORMAT_VERSION, MAGIC,
};
pub use conv::{ConvGrads, ConvLayer};
pub use gradcheck::{
    grad_check, grad_check_with_fault, EntrySelection, GradCheckConfig, GradCheckReport,
    TensorCheck,
};
pub use loss::mse_loss;
pub use network::{FaultTarget, GradFault, Network, NetworkGrads, Stage, Trace};
pub use pool::{
    maxpool2x2_backward, maxpool2x2_forward, upsample2x2_backward, upsample2x2_forward,
};
pub use scalar::Scalar;
pub use tensor::Tensor4;
