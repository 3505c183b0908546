//! Dual-domain CT reconstruction: a sinogram-denoising block and an image
//! post-processing block joined by a differentiable filtered-backprojection
//! layer built on an explicit sparse backprojection matrix.
//!
//! The crate provides
//! - parallel-beam projection geometry, the forward Radon transform and the
//!   sparse backprojector ([`geometry`]),
//! - the ramp filter and the FBP layer with its exact vector-Jacobian
//!   product ([`fbp`]),
//! - the low-dose / sparse-view sinogram degradation pipeline ([`degrade`]),
//! - a small double-precision neural-network substrate with reverse-mode
//!   gradients and Adam ([`nn`]),
//! - the two-block network, dual-domain loss and training loop ([`network`]),
//! - PSNR/SSIM evaluation ([`metrics`]),
//! - phantom generation and dataset packaging ([`phantom`], [`dataset`]).

pub mod dataset;
pub mod degrade;
pub mod error;
pub mod fbp;
pub mod geometry;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod phantom;
pub mod rng;

pub use error::{Error, Result};
