use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::{ComplexTensor, Element, Tensor};
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized transform of `rows` contiguous rows of length `len`.
fn transform_rows(buf: &mut [Complex64], len: usize, direction: FftDirection) {
    if len == 1 {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction));
    fft.process(buf);
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], h: usize, w: usize) {
    for i in 0..h {
        for j in 0..w {
            dst[j * h + i] = src[i * w + j];
        }
    }
}

/// Unitary 2-D transform of one `h×w` plane, in place.
fn plane(buf: &mut [Complex64], h: usize, w: usize, direction: FftDirection) {
    transform_rows(buf, w, direction);
    let mut t = vec![Complex64::new(0.0, 0.0); h * w];
    transpose(buf, &mut t, h, w);
    transform_rows(&mut t, h, direction);
    transpose(&t, buf, w, h);
    let s = 1.0 / ((h * w) as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= s;
    }
}

fn batched(x: &ComplexTensor, direction: FftDirection) -> Result<ComplexTensor> {
    let r = x.rank();
    if r < 2 {
        return Err(Error::shape(format!(
            "FFT needs at least 2 axes, got {:?}",
            x.shape()
        )));
    }
    let (h, w) = (x.shape()[r - 2], x.shape()[r - 1]);
    let mut data = x.data().to_vec();
    for chunk in data.chunks_mut(h * w) {
        plane(chunk, h, w, direction);
    }
    Tensor::new(x.shape(), data)
}

/// Orthonormal 2-D DFT with DC at index (0,0).
pub fn fft2(x: &ComplexTensor) -> Result<ComplexTensor> {
    x.dims2()?;
    batched(x, FftDirection::Forward)
}

/// Inverse of [`fft2`]; also unitary.
pub fn ifft2(y: &ComplexTensor) -> Result<ComplexTensor> {
    y.dims2()?;
    batched(y, FftDirection::Inverse)
}

/// [`fft2`] applied to every plane spanned by the last two axes.
pub fn fft2_batched(x: &ComplexTensor) -> Result<ComplexTensor> {
    batched(x, FftDirection::Forward)
}

pub fn ifft2_batched(y: &ComplexTensor) -> Result<ComplexTensor> {
    batched(y, FftDirection::Inverse)
}

/// Moves DC from (0,0) to (⌊H/2⌋, ⌊W/2⌋). Display only.
pub fn fftshift<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = x.dims2()?;
    let src = x.data();
    let mut out = vec![T::zero(); h * w];
    for i in 0..h {
        for j in 0..w {
            out[((i + h / 2) % h) * w + (j + w / 2) % w] = src[i * w + j];
        }
    }
    Tensor::new(&[h, w], out)
}
