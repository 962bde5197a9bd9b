//! Acquisition model `A = ΨF`, masks, zero filling and data consistency.
//!
//! ```
//! use ganrecon::kspace::{forward, make_mask, shepp_logan, zero_fill, Scheme, Target};
//!
//! let x = shepp_logan(32, 32).to_complex();
//! let mask = make_mask(Scheme::Cartesian, (32, 32), Target::Acceleration(4.0), 0.08, 1)?;
//! let y_u = forward(&x, &mask)?;
//! let zf = zero_fill(&y_u)?;
//! assert_eq!(zf.shape(), &[32, 32]);
//! # Ok::<(), ganrecon::Error>(())
//! ```

mod mask;
mod phantom;

use std::path::Path;

use num_complex::Complex64;

pub use mask::{make_mask, Mask, Scheme, Target, DEFAULT_CENTER_FRACTION, GOLDEN_ANGLE_DEG, RATE_TOLERANCE_PP};
pub use phantom::{jittered_ellipses, phantom_volume, render, shepp_logan, Ellipse, SHEPP_LOGAN};

use crate::error::{Error, Result};
use crate::tensor::{fft2, fftshift, ifft2, io, ComplexTensor};

/// Ground truth, its undersampled k-space and the mask that produced it.
#[derive(Debug, Clone)]
pub struct AcqPair {
    pub x_t: ComplexTensor,
    pub y_u: ComplexTensor,
    pub mask: Mask,
}

impl AcqPair {
    pub fn new(x_t: ComplexTensor, mask: Mask) -> Result<Self> {
        let y_u = forward(&x_t, &mask)?;
        Ok(Self { x_t, y_u, mask })
    }

    pub fn zero_fill(&self) -> Result<ComplexTensor> {
        zero_fill(&self.y_u)
    }
}

fn check_mask(t: &ComplexTensor, mask: &Mask) -> Result<()> {
    let (h, w) = t.dims2()?;
    if (h, w) != mask.shape() {
        return Err(Error::shape(format!(
            "tensor {h}×{w} does not match mask {:?}",
            mask.shape()
        )));
    }
    Ok(())
}

/// `y_u = Ψ ⊙ F x`.
pub fn forward(x: &ComplexTensor, mask: &Mask) -> Result<ComplexTensor> {
    check_mask(x, mask)?;
    let k = fft2(x)?;
    let data = k
        .data()
        .iter()
        .zip(mask.grid().data())
        .map(|(&v, &m)| if m == 1.0 { v } else { Complex64::new(0.0, 0.0) })
        .collect();
    ComplexTensor::new(k.shape(), data)
}

pub fn zero_fill(y_u: &ComplexTensor) -> Result<ComplexTensor> {
    ifft2(y_u)
}

/// Keeps `y_u` where the mask samples and `pred_k` elsewhere.
pub fn data_consistency(pred_k: &ComplexTensor, y_u: &ComplexTensor, mask: &Mask) -> Result<ComplexTensor> {
    check_mask(pred_k, mask)?;
    check_mask(y_u, mask)?;
    let data = pred_k
        .data()
        .iter()
        .zip(y_u.data())
        .zip(mask.grid().data())
        .map(|((&p, &y), &m)| if m == 1.0 { y } else { p })
        .collect();
    ComplexTensor::new(pred_k.shape(), data)
}

impl Mask {
    /// PGM with DC moved to the centre.
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        io::save_pgm(path, &fftshift(self.grid())?, 0.0, 1.0)
    }

    pub fn save_mbt(&self, path: impl AsRef<Path>) -> Result<()> {
        io::save_real(path, self.grid())
    }
}
