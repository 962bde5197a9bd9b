//! Benchmark toolkit for GAN-based fast MRI reconstruction.
//!
//! The crate covers the whole path from a fully sampled image to a
//! comparison table: the undersampled acquisition model, classical
//! compressed-sensing baselines, three GAN reconstruction families built on a
//! small reverse-mode autodiff engine, and the PSNR/SSIM/RMSE/FID protocol.

// `!(x > 0.0)` style checks are there to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod bench;
pub mod classical;
pub mod error;
pub mod kspace;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod trainer;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{ComplexTensor, RealTensor, Tensor};
