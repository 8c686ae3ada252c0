//! Desk-scale testbed for adversarial attacks on physical-layer wireless ML.
//!
//! The crate provides:
//!
//! - [`tensor`] / [`nn`]: a deterministic tensor and sequential-layer engine
//!   with taped reverse-mode gradients, SGD/Adam, and a portable binary
//!   weight format;
//! - [`wireless`]: digital modulation, AWGN channel and jammer models, a
//!   synthetic IQ-frame dataset generator, and link-level metrics;
//! - [`modclass`]: a CNN modulation classifier plus C&W L2 and FGSM evasion
//!   attacks against it;
//! - [`chanauto`]: an end-to-end channel autoencoder and a data-independent
//!   universal perturbation attack on its decoder;
//! - [`drl`]: a policy-gradient autoencoder with noisy feedback, attacked
//!   black-box with perturbations transferred from a surrogate;
//! - [`harness`]: experiment configs, the CLI surface, a gradient-free
//!   attack, out-of-distribution probes, and a machine-readable robustness
//!   report.
//!
//! All core math is generic over the scalar type ([`Scalar`], implemented
//! for `f32` and `f64`); the concrete aliases below fix the production
//! pipeline to `f32`, which matches the on-disk formats.



pub mod error;

pub mod modclass;
pub mod nn;
pub mod scalar;
pub mod tensor;
pub mod util;
pub mod wireless;

pub mod chanauto;
pub mod drl;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Production scalar: matches the 32-bit payload of the weight and dataset
/// file formats, so save/load round trips are bit-exact.
pub type Real = f32;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Model32 = nn::ModelState<f32>;
pub type Model64 = nn::ModelState<f64>;
pub type Dataset32 = wireless::Dataset<f32>;
