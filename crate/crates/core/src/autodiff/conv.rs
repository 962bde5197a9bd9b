//! 2-D convolution kernels on N×C×H×W buffers, lowered to im2col + GEMM.
//!
//! `forward` is cross-correlation. `backward_input` is its exact adjoint in
//! the input and doubles as the transposed convolution; `backward_weight`
//! accumulates the kernel gradient.

use crate::error::{Error, Result};
use crate::tensor::RealTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(stride: usize, pad: usize) -> Self {
        Self { stride, pad }
    }

    pub fn out_extent(&self, input: usize, k: usize) -> Result<usize> {
        let padded = input + 2 * self.pad;
        if self.stride == 0 || padded < k {
            return Err(Error::shape(format!(
                "conv geometry: extent {input}, kernel {k}, stride {}, pad {}",
                self.stride, self.pad
            )));
        }
        Ok((padded - k) / self.stride + 1)
    }

    /// Output extent of the transposed convolution, `s·(H−1) + k − 2p`.
    pub fn transposed_extent(&self, input: usize, k: usize) -> Result<usize> {
        let full = self.stride * (input - 1) + k;
        if self.stride == 0 || full <= 2 * self.pad {
            return Err(Error::shape(format!(
                "transposed conv geometry gives non-positive extent: input {input}, kernel {k}, stride {}, pad {}",
                self.stride, self.pad
            )));
        }
        Ok(full - 2 * self.pad)
    }

    /// Output indices `o` in `0..out` whose tap `o·s + k − p` lies in `0..input`.
    #[inline]
    fn valid(&self, kk: usize, input: usize, out: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.pad);
        let lo = if p > kk { (p - kk).div_ceil(s) } else { 0 };
        let hi = if input + p > kk {
            ((input - 1 + p - kk) / s + 1).min(out)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

/// Unfolds one C×H×W image into a (C·kh·kw)×(oh·ow) column matrix.
#[allow(clippy::too_many_arguments)]
fn im2col(xp: &[f64], (c, h, w): (usize, usize, usize), kh: usize, kw: usize, geom: ConvGeom, oh: usize, ow: usize, cols: &mut [f64]) {
    let (s, pad) = (geom.stride, geom.pad);
    let p = oh * ow;
    for ci in 0..c {
        for ky in 0..kh {
            let (oy0, oy1) = geom.valid(ky, h, oh);
            for kx in 0..kw {
                let row = &mut cols[((ci * kh + ky) * kw + kx) * p..][..p];
                row.fill(0.0);
                let (ox0, ox1) = geom.valid(kx, w, ow);
                if ox0 >= ox1 {
                    continue;
                }
                for oy in oy0..oy1 {
                    let iy = oy * s + ky - pad;
                    let xrow = &xp[(ci * h + iy) * w..][..w];
                    let orow = &mut row[oy * ow..(oy + 1) * ow];
                    if s == 1 {
                        let ix0 = ox0 + kx - pad;
                        orow[ox0..ox1].copy_from_slice(&xrow[ix0..ix0 + ox1 - ox0]);
                    } else {
                        for ox in ox0..ox1 {
                            orow[ox] = xrow[ox * s + kx - pad];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into the image.
#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], (c, h, w): (usize, usize, usize), kh: usize, kw: usize, geom: ConvGeom, oh: usize, ow: usize, gx: &mut [f64]) {
    let (s, pad) = (geom.stride, geom.pad);
    let p = oh * ow;
    for ci in 0..c {
        for ky in 0..kh {
            let (oy0, oy1) = geom.valid(ky, h, oh);
            for kx in 0..kw {
                let row = &cols[((ci * kh + ky) * kw + kx) * p..][..p];
                let (ox0, ox1) = geom.valid(kx, w, ow);
                if ox0 >= ox1 {
                    continue;
                }
                for oy in oy0..oy1 {
                    let iy = oy * s + ky - pad;
                    let xrow = &mut gx[(ci * h + iy) * w..][..w];
                    let grow = &row[oy * ow..(oy + 1) * ow];
                    if s == 1 {
                        let ix0 = ox0 + kx - pad;
                        for (a, b) in xrow[ix0..ix0 + ox1 - ox0].iter_mut().zip(&grow[ox0..ox1]) {
                            *a += b;
                        }
                    } else {
                        for ox in ox0..ox1 {
                            xrow[ox * s + kx - pad] += grow[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Row-major `c = a·b + beta·c` with `a` m×k and `b` k×n, either operand
/// optionally read transposed from its stored layout.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // blocks whose extents were asserted.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `x`: N×C×H×W, `w`: K×C×kh×kw, `bias`: K. Returns N×K×H'×W'.
pub fn forward(
    x: &RealTensor,
    w: &RealTensor,
    bias: Option<&RealTensor>,
    geom: ConvGeom,
) -> Result<RealTensor> {
    let (n, c, h, wd) = x.dims4()?;
    let (k, wc, kh, kw) = w.dims4()?;
    if wc != c {
        return Err(Error::shape(format!(
            "conv2d: input has {c} channels, kernel expects {wc}"
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [k] {
            return Err(Error::shape(format!("conv2d bias {:?}, expected [{k}]", b.shape())));
        }
    }
    let oh = geom.out_extent(h, kh)?;
    let ow = geom.out_extent(wd, kw)?;
    let (p, ckk) = (oh * ow, c * kh * kw);
    let mut cols = vec![0.0; ckk * p];
    let mut out = vec![0.0; n * k * p];
    for ni in 0..n {
        im2col(&x.data()[ni * c * h * wd..(ni + 1) * c * h * wd], (c, h, wd), kh, kw, geom, oh, ow, &mut cols);
        let o = &mut out[ni * k * p..(ni + 1) * k * p];
        gemm(k, ckk, p, w.data(), false, &cols, false, 0.0, o);
        if let Some(b) = bias {
            for (row, bv) in o.chunks_mut(p).zip(b.data()) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    RealTensor::new(&[n, k, oh, ow], out)
}

/// Adjoint of [`forward`] in its input: `gy`: N×K×H'×W' → N×C×`in_h`×`in_w`.
pub fn backward_input(
    gy: &RealTensor,
    w: &RealTensor,
    geom: ConvGeom,
    in_h: usize,
    in_w: usize,
) -> Result<RealTensor> {
    let (n, k, oh, ow) = gy.dims4()?;
    let (wk, c, kh, kw) = w.dims4()?;
    if wk != k {
        return Err(Error::shape(format!(
            "transposed conv: input has {k} channels, kernel expects {wk}"
        )));
    }
    if geom.out_extent(in_h, kh)? != oh || geom.out_extent(in_w, kw)? != ow {
        return Err(Error::shape(format!(
            "transposed conv: {oh}×{ow} does not map back onto {in_h}×{in_w}"
        )));
    }
    let (p, ckk, plane) = (oh * ow, c * kh * kw, c * in_h * in_w);
    let mut cols = vec![0.0; ckk * p];
    let mut out = vec![0.0; n * plane];
    for ni in 0..n {
        gemm(ckk, k, p, w.data(), true, &gy.data()[ni * k * p..(ni + 1) * k * p], false, 0.0, &mut cols);
        col2im(&cols, (c, in_h, in_w), kh, kw, geom, oh, ow, &mut out[ni * plane..(ni + 1) * plane]);
    }
    RealTensor::new(&[n, c, in_h, in_w], out)
}

/// Kernel gradient of [`forward`]: returns K×C×`kh`×`kw`.
pub fn backward_weight(
    x: &RealTensor,
    gy: &RealTensor,
    geom: ConvGeom,
    kh: usize,
    kw: usize,
) -> Result<RealTensor> {
    let (n, c, h, wd) = x.dims4()?;
    let (gn, k, oh, ow) = gy.dims4()?;
    if gn != n {
        return Err(Error::shape("conv weight gradient: batch mismatch"));
    }
    if geom.out_extent(h, kh)? != oh || geom.out_extent(wd, kw)? != ow {
        return Err(Error::shape("conv weight gradient: output extent mismatch"));
    }
    let (p, ckk) = (oh * ow, c * kh * kw);
    let mut cols = vec![0.0; ckk * p];
    let mut out = vec![0.0; k * ckk];
    for ni in 0..n {
        im2col(&x.data()[ni * c * h * wd..(ni + 1) * c * h * wd], (c, h, wd), kh, kw, geom, oh, ow, &mut cols);
        gemm(k, p, ckk, &gy.data()[ni * k * p..(ni + 1) * k * p], false, &cols, true, 1.0, &mut out);
    }
    RealTensor::new(&[k, c, kh, kw], out)
}

/// Transposed convolution. `x`: N×Cin×H×W, `w`: Cin×Cout×kh×kw.
pub fn transposed_forward(
    x: &RealTensor,
    w: &RealTensor,
    bias: Option<&RealTensor>,
    geom: ConvGeom,
) -> Result<RealTensor> {
    let (_, _, h, wd) = x.dims4()?;
    let (_, cout, kh, kw) = w.dims4()?;
    let oh = geom.transposed_extent(h, kh)?;
    let ow = geom.transposed_extent(wd, kw)?;
    let mut y = backward_input(x, w, geom, oh, ow)?;
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(format!(
                "deconv2d bias {:?}, expected [{cout}]",
                b.shape()
            )));
        }
        let plane = oh * ow;
        for (i, chunk) in y.data_mut().chunks_mut(plane).enumerate() {
            let bv = b.data()[i % cout];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
    Ok(y)
}
