//! Desk-scale simulator of differentially-private federated GAN training
//! with an optional denoising-autoencoder stage, an RDP privacy accountant
//! and an FID-style evaluation suite.

// `!(x > 0.0)` checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod config;
pub mod datasets;
pub mod denoiser;
pub mod error;
pub mod federated;
pub mod gan;
mod kernels;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod output;
pub mod paramio;
pub mod pgm;
pub mod privacy;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ParamSet, Tensor};
