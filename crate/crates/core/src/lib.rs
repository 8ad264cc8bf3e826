//! Disentangled implicit neural representations for medical inverse problems.
//!
//! A population-shared encoder/decoder pair is pre-trained directly from raw
//! measurements together with one small encoder per subject. At test time the
//! shared pair is frozen and only a fresh subject encoder is fitted to the new
//! measurement through a differentiable forward model (identity, fan-beam CT or
//! undersampled Fourier/MRI).
//!
//! Module map:
//! - [`diffcore`]: reverse-mode differentiation over dense tensors
//! - [`encoders`]: hash-grid, Fourier and sinusoidal coordinate encoders
//! - [`models`]: DisINR, naive INR and shared-encoder baselines, checkpoints
//! - [`physics`]: forward operators, adjoints, FBP, zero-filling, masks
//! - [`training`]: Adam, pre-training, test-time adaptation, ablations
//! - [`data`]: synthetic phantom families, measurement simulation, containers
//! - [`eval`]: PSNR, SSIM, PCA feature maps, convergence curves

pub mod data;
pub mod diffcore;
pub mod encoders;
mod error;
pub mod eval;
pub mod models;
pub mod physics;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

/// Scalar type of the differentiation engine.
#[cfg(not(feature = "f64"))]
pub type Real = f32;
/// Scalar type of the differentiation engine.
#[cfg(feature = "f64")]
pub type Real = f64;

/// True when the crate is built with 64-bit engine precision.
pub const IS_F64: bool = cfg!(feature = "f64");
