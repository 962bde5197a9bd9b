//! Dense row-major n-dimensional arrays over `f64` and `Complex64`.
//!
//! Tensors are values: every operation returns a fresh tensor and leaves its
//! inputs untouched. 2-D helpers (`pad2d`, `crop2d`, the FFTs) act on the last
//! two axes.

mod fft;
pub mod io;

use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub use fft::{fft2, fft2_batched, fftshift, ifft2, ifft2_batched};

/// Storage type tag, also the MBT1 dtype byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    Real64 = 0,
    Complex128 = 1,
}

pub trait Element:
    Copy
    + Default
    + PartialEq
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + 'static
{
    const DTYPE: DType;
    fn zero() -> Self;
    fn from_f64(v: f64) -> Self;
    fn scale(self, s: f64) -> Self;
    fn norm_sqr(self) -> f64;
    fn is_finite(self) -> bool;
    /// Real part of `self * conj(other)`.
    fn inner(self, other: Self) -> f64;
}

impl Element for f64 {
    const DTYPE: DType = DType::Real64;
    fn zero() -> Self {
        0.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn inner(self, other: Self) -> f64 {
        self * other
    }
}

impl Element for Complex64 {
    const DTYPE: DType = DType::Complex128;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_f64(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
    fn inner(self, other: Self) -> f64 {
        (self * other.conj()).re
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub type RealTensor = Tensor<f64>;
pub type ComplexTensor = Tensor<Complex64>;

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.contains(&0) {
        return Err(Error::shape(format!("extents must be positive, got {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Panics on a zero extent; use [`Tensor::new`] for untrusted shapes.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = check_shape(shape).expect("zero extent");
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = check_shape(shape).expect("zero extent");
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Mutable access for builders inside the crate; public operations stay pure.
    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [h, w] => Ok((*h, *w)),
            s => Err(Error::shape(format!("expected a 2-D tensor, got {s:?}"))),
        }
    }

    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            [n, c, h, w] => Ok((*n, *c, *h, *w)),
            s => Err(Error::shape(format!("expected an N×C×H×W tensor, got {s:?}"))),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn at(&self, index: &[usize]) -> T {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut flat = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < d, "index {ix} out of bounds for axis {i} of extent {d}");
            flat = flat * d + ix;
        }
        self.data[flat]
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn same_shape<U>(&self, other: &Tensor<U>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v.scale(s))
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn mean(&self) -> T {
        self.sum().scale(1.0 / self.data.len() as f64)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn l2norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Real inner product `Re Σ a·conj(b)`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.inner(b))
            .sum())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn last2(&self) -> Result<(usize, usize, usize)> {
        let r = self.shape.len();
        if r < 2 {
            return Err(Error::shape(format!(
                "need at least 2 axes, got {:?}",
                self.shape
            )));
        }
        let (h, w) = (self.shape[r - 2], self.shape[r - 1]);
        Ok((self.data.len() / (h * w), h, w))
    }

    /// Zero-pads the last two axes by `p` on every side.
    pub fn pad2d(&self, p: usize) -> Result<Self> {
        let (lead, h, w) = self.last2()?;
        let (ph, pw) = (h + 2 * p, w + 2 * p);
        let mut data = vec![T::zero(); lead * ph * pw];
        for b in 0..lead {
            for i in 0..h {
                let src = &self.data[(b * h + i) * w..(b * h + i + 1) * w];
                let start = (b * ph + i + p) * pw + p;
                data[start..start + w].copy_from_slice(src);
            }
        }
        let mut shape = self.shape.clone();
        let r = shape.len();
        shape[r - 2] = ph;
        shape[r - 1] = pw;
        Self::new(&shape, data)
    }

    /// Removes `p` samples from every side of the last two axes.
    pub fn crop2d(&self, p: usize) -> Result<Self> {
        let (lead, h, w) = self.last2()?;
        if 2 * p >= h || 2 * p >= w {
            return Err(Error::shape(format!(
                "cannot crop {p} from each side of {h}×{w}"
            )));
        }
        let (ch, cw) = (h - 2 * p, w - 2 * p);
        let mut data = Vec::with_capacity(lead * ch * cw);
        for b in 0..lead {
            for i in 0..ch {
                let start = (b * h + i + p) * w + p;
                data.extend_from_slice(&self.data[start..start + cw]);
            }
        }
        let mut shape = self.shape.clone();
        let r = shape.len();
        shape[r - 2] = ch;
        shape[r - 1] = cw;
        Self::new(&shape, data)
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::shape(format!("axis {axis} out of range for rank {rank}")));
        }
        for p in parts {
            let ok = p.rank() == rank
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape(format!(
                    "concat along axis {axis}: {:?} vs {:?}",
                    first.shape, p.shape
                )));
            }
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let total_axis: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut data = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total_axis;
        Self::new(&shape, data)
    }

    /// Concatenation along axis 1 of N×C×H×W tensors.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        Self::concat(parts, 1)
    }

    /// `len` consecutive entries of `axis` starting at `start`.
    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        if axis >= self.rank() || len == 0 || start + len > self.shape[axis] {
            return Err(Error::shape(format!(
                "slice {start}..{} of axis {axis} in {:?}",
                start + len,
                self.shape
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let extent = self.shape[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Self::new(&shape, data)
    }
}

impl RealTensor {
    pub fn to_complex(&self) -> ComplexTensor {
        self.map(|v| Complex64::new(v, 0.0))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

impl ComplexTensor {
    pub fn from_parts(re: &RealTensor, im: &RealTensor) -> Result<Self> {
        re.same_shape(im)?;
        Self::new(
            re.shape(),
            re.data
                .iter()
                .zip(&im.data)
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect(),
        )
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn abs(&self) -> RealTensor {
        self.map(|v| v.norm())
    }

    pub fn real(&self) -> RealTensor {
        self.map(|v| v.re)
    }

    pub fn imag(&self) -> RealTensor {
        self.map(|v| v.im)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}
