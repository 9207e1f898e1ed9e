//! Denoising workbench for low-photon-budget multiphoton microscopy.
//!
//! The crate is organised bottom-up:
//!
//! - [`image`]: single-channel rasters, TIFF/PNG I/O, histograms,
//!   equalization, IsoData thresholding and binary-mask algebra.
//! - [`noise`]: synthetic phantoms and the thresholded Poisson/Gaussian
//!   detector model that produces stochastic-resonance frame stacks.
//! - [`filters`]: Gaussian, median and non-local-means baselines plus the
//!   Anscombe variance-stabilizing transform.
//! - [`nn`]: a small CPU tensor engine with hand-written backward passes.
//! - [`ddae`]: the fully convolutional denoising autoencoder and its trainer.
//! - [`metrics`]: PSNR, SSIM, boundary precision/recall/F1 and report tables.

pub mod ddae;
pub mod error;
pub mod filters;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod seed;

pub use error::{Error, Result};
pub use image::{BinaryMask, Histogram, Image, RgbImage};
