//! Convolutional black-box modeling of nonlinear audio effects.
//!
//! The model is a time-domain autoencoder: a learned filter bank front-end,
//! a small dense network on the pooled latent representation, and a
//! synthesis back-end whose dense stack ends in per-channel smooth adaptive
//! activation functions before the transposed first-layer convolution.

pub mod audio;
pub mod cli;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod training;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor2D};
