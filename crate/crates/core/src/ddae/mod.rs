//! The denoising autoencoder: fixed encoder/decoder architecture, training
//! on a simulated dataset, and inference with automatic padding.

mod model;
mod train;

pub use model::{DdaeModel, CHANNELS, PARAM_COUNT};
pub use train::{train, LossCurve, TrainConfig, TrainOutcome};
