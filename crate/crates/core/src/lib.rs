//! Multi-scale, structure-aware exposure correction.
//!
//! The crate is organized around a small differentiable tensor engine and the
//! image pipeline built on top of it:
//!
//! * [`tensor`] / [`autodiff`] / [`optim`] — plain tensors, a reverse-mode
//!   tape, Adam, and a finite-difference gradient checker.
//! * [`pyramid`] — Burt–Adelson Gaussian/Laplacian pyramids with exact
//!   reconstruction.
//! * [`metrics`] — full-reference PSNR and SSIM.
//! * [`losses`] — the four training losses and their weighted combination.
//! * [`model`] — the coarse-to-fine generator cascade and the discriminator.
//! * [`data`] — dataset layout, deterministic splits, patch sampling and the
//!   synthetic exposure-corruption generator.
//! * [`trainer`] — the two-phase training schedule, presets and evaluation.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! training runs in `f32`, gradient checks in `f64`.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod pyramid;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub(crate) mod kernels;

pub use error::CoreError;
pub use scalar::Scalar;

/// Single-precision tensor, the training dtype.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision tensor, the gradient-check dtype.
pub type Tensor64 = tensor::Tensor<f64>;
/// Single-precision image.
pub type Image32 = image::Image<f32>;
/// Double-precision image.
pub type Image64 = image::Image<f64>;
/// Single-precision generator, the trainable configuration.
pub type Generator32 = model::Generator<f32>;
/// Single-precision discriminator.
pub type Discriminator32 = model::Discriminator<f32>;
