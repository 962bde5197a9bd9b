use num_complex::Complex64;

use super::conv::{self, ConvGeom};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{fft2_batched, ifft2_batched, ComplexTensor, RealTensor, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param { store: u64, id: ParamId },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddConst(Var),
    MulConst(Var, RealTensor),
    Square(Var),
    Sum(Var),
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Deconv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: RealTensor, inv_std: Vec<f64>, train: bool },
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Dense { x: Var, w: Var, b: Var },
    Reshape(Var),
    Concat { parts: Vec<Var>, sizes: Vec<usize> },
    SliceChannels { x: Var, start: usize },
    Fft { x: Var, inverse: bool },
    Magnitude(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    LogClamped { x: Var, lo: f64, hi: f64 },
    GlobalAvgPool(Var),
}

#[derive(Debug)]
struct Node {
    value: RealTensor,
    op: Op,
}

/// Reverse-mode tape over real tensors.
///
/// Nodes are appended in evaluation order and only reference earlier nodes,
/// so the record is acyclic by construction and a reverse sweep over the
/// tape is a valid topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<RealTensor>>,
}

/// Per-channel statistics over N, H, W of an N×C×H×W tensor.
fn channel_stats(x: &RealTensor) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let (n, c, h, w) = x.dims4()?;
    let plane = h * w;
    let count = n * plane;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    let d = x.data();
    for ci in 0..c {
        let mut s = 0.0;
        for ni in 0..n {
            s += d[(ni * c + ci) * plane..(ni * c + ci + 1) * plane].iter().sum::<f64>();
        }
        let m = s / count as f64;
        let mut v = 0.0;
        for ni in 0..n {
            v += d[(ni * c + ci) * plane..(ni * c + ci + 1) * plane]
                .iter()
                .map(|x| (x - m) * (x - m))
                .sum::<f64>();
        }
        mean[ci] = m;
        var[ci] = v / count as f64;
    }
    Ok((mean, var, count))
}

fn pairs_to_complex(x: &RealTensor) -> Result<ComplexTensor> {
    let (n, c2, h, w) = x.dims4()?;
    if c2 % 2 != 0 {
        return Err(Error::shape(format!(
            "complex channel pairs need an even channel count, got {c2}"
        )));
    }
    let c = c2 / 2;
    let plane = h * w;
    let d = x.data();
    let mut out = Vec::with_capacity(n * c * plane);
    for ni in 0..n {
        for ci in 0..c {
            let re = &d[(ni * c2 + 2 * ci) * plane..(ni * c2 + 2 * ci + 1) * plane];
            let im = &d[(ni * c2 + 2 * ci + 1) * plane..(ni * c2 + 2 * ci + 2) * plane];
            out.extend(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)));
        }
    }
    Tensor::new(&[n, c, h, w], out)
}

fn complex_to_pairs(z: &ComplexTensor) -> Result<RealTensor> {
    let (n, c, h, w) = z.dims4()?;
    let plane = h * w;
    let d = z.data();
    let mut out = Vec::with_capacity(2 * d.len());
    for ni in 0..n {
        for ci in 0..c {
            let src = &d[(ni * c + ci) * plane..(ni * c + ci + 1) * plane];
            out.extend(src.iter().map(|v| v.re));
            out.extend(src.iter().map(|v| v.im));
        }
    }
    Tensor::new(&[n, 2 * c, h, w], out)
}

/// Unitary FFT over the last two axes of an N×2C×H×W real/imaginary tensor.
pub fn fft_pairs(x: &RealTensor, inverse: bool) -> Result<RealTensor> {
    let z = pairs_to_complex(x)?;
    let y = if inverse {
        ifft2_batched(&z)?
    } else {
        fft2_batched(&z)?
    };
    complex_to_pairs(&y)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: RealTensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &RealTensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Gradient of the last `backward` loss with respect to `v`, if reached.
    pub fn grad(&self, v: Var) -> Option<&RealTensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Constant leaf; receives a gradient but feeds no parameter.
    pub fn input(&mut self, value: RealTensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Leaf bound to a parameter of `store`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(
            store.value(id).clone(),
            Op::Param {
                store: store.id(),
                id,
            },
        )
    }

    fn binary_shape(&self, a: Var, b: Var) -> Result<()> {
        self.value(a).same_shape(self.value(b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shape(a, b)?;
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shape(a, b)?;
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shape(a, b)?;
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn add_const(&mut self, a: Var, c: &RealTensor) -> Result<Var> {
        let v = self.value(a).add(c)?;
        Ok(self.push(v, Op::AddConst(a)))
    }

    pub fn mul_const(&mut self, a: Var, c: &RealTensor) -> Result<Var> {
        let v = self.value(a).mul(c)?;
        Ok(self.push(v, Op::MulConst(a, c.clone())))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = RealTensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let v = conv::forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            geom,
        )?;
        Ok(self.push(v, Op::Conv { x, w, b, geom }))
    }

    /// Transposed convolution; `w` is Cin×Cout×kh×kw.
    pub fn deconv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let (_, cin, _, _) = self.value(x).dims4()?;
        let (wc, _, _, _) = self.value(w).dims4()?;
        if wc != cin {
            return Err(Error::shape(format!(
                "deconv2d: input has {cin} channels, kernel expects {wc}"
            )));
        }
        let v = conv::transposed_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            geom,
        )?;
        Ok(self.push(v, Op::Deconv { x, w, b, geom }))
    }

    /// Batch normalization over N, H, W per channel.
    ///
    /// In train mode the batch statistics normalize the input and the
    /// running buffers are blended as `m·running + (1−m)·batch`; in eval mode
    /// the running buffers are used directly.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut RealTensor,
        running_var: &mut RealTensor,
        mode: Mode,
        momentum: f64,
        eps: f64,
    ) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if eps <= 0.0 {
            return Err(Error::param("batch-norm epsilon must be positive"));
        }
        for t in [self.value(gamma), self.value(beta)] {
            if t.shape() != [c] {
                return Err(Error::shape(format!("batch-norm affine {:?}, expected [{c}]", t.shape())));
            }
        }
        let (mean, var) = match mode {
            Mode::Train => {
                let (mean, var, count) = channel_stats(self.value(x))?;
                if count < 2 {
                    return Err(Error::DegenerateVariance(format!(
                        "train-mode batch norm over a single value per channel (input {n}×{c}×{h}×{w})"
                    )));
                }
                for ci in 0..c {
                    let rm = &mut running_mean.data_mut()[ci];
                    *rm = momentum * *rm + (1.0 - momentum) * mean[ci];
                    let rv = &mut running_var.data_mut()[ci];
                    *rv = momentum * *rv + (1.0 - momentum) * var[ci];
                }
                (mean, var)
            }
            Mode::Eval => (running_mean.data().to_vec(), running_var.data().to_vec()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let plane = h * w;
        let xd = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for ni in 0..n {
            for ci in 0..c {
                let r = (ni * c + ci) * plane..(ni * c + ci + 1) * plane;
                for i in r {
                    let xh = (xd[i] - mean[ci]) * inv_std[ci];
                    xhat[i] = xh;
                    out[i] = g[ci] * xh + b[ci];
                }
            }
        }
        let shape = [n, c, h, w];
        let xhat = RealTensor::new(&shape, xhat)?;
        Ok(self.push(
            RealTensor::new(&shape, out)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train: mode == Mode::Train,
            },
        ))
    }

    /// Leaky ReLU; the derivative at 0 is `slope`.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { slope * a });
        self.push(v, Op::LeakyRelu(x, slope))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| 1.0 / (1.0 + (-a).exp()));
        self.push(v, Op::Sigmoid(x))
    }

    /// `x`: N×F, `w`: F×G, `b`: G.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (n, f) = xv.dims2()?;
        let (wf, g) = wv.dims2()?;
        if wf != f || self.value(b).shape() != [g] {
            return Err(Error::shape(format!(
                "dense: input {:?}, weight {:?}, bias {:?}",
                xv.shape(),
                wv.shape(),
                self.value(b).shape()
            )));
        }
        let (xd, wd, bd) = (xv.data(), wv.data(), self.value(b).data());
        let mut out = vec![0.0; n * g];
        for ni in 0..n {
            let row = &mut out[ni * g..(ni + 1) * g];
            row.copy_from_slice(bd);
            for fi in 0..f {
                let a = xd[ni * f + fi];
                for (o, wv) in row.iter_mut().zip(&wd[fi * g..(fi + 1) * g]) {
                    *o += a * wv;
                }
            }
        }
        Ok(self.push(RealTensor::new(&[n, g], out)?, Op::Dense { x, w, b }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x)))
    }

    /// N×C×H×W → N×(C·H·W).
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        let n = s[0];
        let rest = s[1..].iter().product();
        self.reshape(x, &[n, rest])
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&RealTensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = RealTensor::concat_channels(&tensors)?;
        let sizes = tensors.iter().map(|t| t.shape()[1]).collect();
        Ok(self.push(
            v,
            Op::Concat {
                parts: parts.to_vec(),
                sizes,
            },
        ))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.value(x).dims4()?;
        let v = self.value(x).slice_axis(1, start, len)?;
        Ok(self.push(v, Op::SliceChannels { x, start }))
    }

    /// Unitary 2-D FFT of channel pairs (re, im) of an N×2C×H×W tensor.
    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let v = fft_pairs(self.value(x), false)?;
        Ok(self.push(v, Op::Fft { x, inverse: false }))
    }

    pub fn ifft2(&mut self, x: Var) -> Result<Var> {
        let v = fft_pairs(self.value(x), true)?;
        Ok(self.push(v, Op::Fft { x, inverse: true }))
    }

    /// N×2C×H×W channel pairs → N×C×H×W magnitudes.
    pub fn magnitude(&mut self, x: Var) -> Result<Var> {
        let z = pairs_to_complex(self.value(x))?;
        Ok(self.push(z.abs(), Op::Magnitude(x)))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).clamp(lo, hi);
        self.push(v, Op::Clamp { x, lo, hi })
    }

    /// `ln(clamp(x, lo, hi))`; no gradient flows where the clamp is active.
    pub fn log_clamped(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).map(|a| a.clamp(lo, hi).ln());
        self.push(v, Op::LogClamped { x, lo, hi })
    }

    /// N×C×H×W → N×C spatial means.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let plane = (h * w) as f64;
        let v: Vec<f64> = self
            .value(x)
            .data()
            .chunks(h * w)
            .map(|p| p.iter().sum::<f64>() / plane)
            .collect();
        Ok(self.push(RealTensor::new(&[n, c], v)?, Op::GlobalAvgPool(x)))
    }

    /// Backpropagates a scalar loss, writing gradients into `store`.
    ///
    /// Every gradient in `store` is zeroed first, then each parameter leaf
    /// belonging to `store` adds its contribution exactly once. Leaves of
    /// other stores receive node gradients only (see [`Graph::grad`]).
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        store.zero_grads();
        let mut grads: Vec<Option<RealTensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(RealTensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            self.backprop_node(i, &gy, &mut grads, store)?;
            grads[i] = Some(gy);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(
        &self,
        i: usize,
        gy: &RealTensor,
        grads: &mut [Option<RealTensor>],
        store: &mut ParamStore,
    ) -> Result<()> {
        let mut acc = |v: Var, g: RealTensor| {
            let slot = &mut grads[v.0];
            match slot {
                Some(existing) => {
                    for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                None => *slot = Some(g),
            }
        };
        let node = &self.nodes[i];
        match &node.op {
            Op::Input => {}
            Op::Param { store: sid, id } => {
                if *sid == store.id() {
                    store.accumulate_grad(*id, gy);
                }
            }
            Op::Add(a, b) => {
                acc(*a, gy.clone());
                acc(*b, gy.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, gy.clone());
                acc(*b, gy.scale(-1.0));
            }
            Op::Mul(a, b) => {
                acc(*a, gy.mul(self.value(*b))?);
                acc(*b, gy.mul(self.value(*a))?);
            }
            Op::Scale(a, s) => acc(*a, gy.scale(*s)),
            Op::AddScalar(a) | Op::AddConst(a) | Op::Reshape(a) => {
                acc(*a, gy.reshape(self.value(*a).shape())?)
            }
            Op::MulConst(a, c) => acc(*a, gy.mul(c)?),
            Op::Square(a) => {
                let x = self.value(*a);
                acc(*a, gy.zip_map(x, |g, x| 2.0 * g * x)?);
            }
            Op::Sum(a) => {
                let g = gy.data()[0];
                acc(*a, RealTensor::full(self.value(*a).shape(), g));
            }
            Op::Conv { x, w, b, geom } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (_, _, h, wd) = xv.dims4()?;
                let (_, _, kh, kw) = wv.dims4()?;
                acc(*x, conv::backward_input(gy, wv, *geom, h, wd)?);
                acc(*w, conv::backward_weight(xv, gy, *geom, kh, kw)?);
                if let Some(b) = b {
                    acc(*b, channel_sums(gy)?);
                }
            }
            Op::Deconv { x, w, b, geom } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (_, _, kh, kw) = wv.dims4()?;
                acc(*x, conv::forward(gy, wv, None, *geom)?);
                acc(*w, conv::backward_weight(gy, xv, *geom, kh, kw)?);
                if let Some(b) = b {
                    acc(*b, channel_sums(gy)?);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (n, c, h, w) = gy.dims4()?;
                let plane = h * w;
                let m = (n * plane) as f64;
                let g = self.value(*gamma).data();
                let (gd, xh) = (gy.data(), xhat.data());
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for ni in 0..n {
                    for ci in 0..c {
                        for j in (ni * c + ci) * plane..(ni * c + ci + 1) * plane {
                            dgamma[ci] += gd[j] * xh[j];
                            dbeta[ci] += gd[j];
                        }
                    }
                }
                let mut dx = vec![0.0; gd.len()];
                for ni in 0..n {
                    for ci in 0..c {
                        let k = g[ci] * inv_std[ci];
                        for j in (ni * c + ci) * plane..(ni * c + ci + 1) * plane {
                            dx[j] = if *train {
                                k * (gd[j] - dbeta[ci] / m - xh[j] * dgamma[ci] / m)
                            } else {
                                k * gd[j]
                            };
                        }
                    }
                }
                acc(*x, RealTensor::new(gy.shape(), dx)?);
                acc(*gamma, RealTensor::new(&[c], dgamma)?);
                acc(*beta, RealTensor::new(&[c], dbeta)?);
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                acc(*a, gy.zip_map(x, |g, x| if x > 0.0 { g } else { slope * g })?);
            }
            Op::Tanh(a) => {
                let y = &node.value;
                acc(*a, gy.zip_map(y, |g, y| g * (1.0 - y * y))?);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                acc(*a, gy.zip_map(y, |g, y| g * y * (1.0 - y))?);
            }
            Op::Dense { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (n, f) = xv.dims2()?;
                let (_, g) = wv.dims2()?;
                let (xd, wd, gd) = (xv.data(), wv.data(), gy.data());
                let mut dx = vec![0.0; n * f];
                let mut dw = vec![0.0; f * g];
                let mut db = vec![0.0; g];
                for ni in 0..n {
                    let grow = &gd[ni * g..(ni + 1) * g];
                    for (d, gv) in db.iter_mut().zip(grow) {
                        *d += gv;
                    }
                    for fi in 0..f {
                        let wrow = &wd[fi * g..(fi + 1) * g];
                        dx[ni * f + fi] = wrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        let a = xd[ni * f + fi];
                        for (d, gv) in dw[fi * g..(fi + 1) * g].iter_mut().zip(grow) {
                            *d += a * gv;
                        }
                    }
                }
                acc(*x, RealTensor::new(&[n, f], dx)?);
                acc(*w, RealTensor::new(&[f, g], dw)?);
                acc(*b, RealTensor::new(&[g], db)?);
            }
            Op::Concat { parts, sizes } => {
                let mut start = 0;
                for (p, &len) in parts.iter().zip(sizes) {
                    acc(*p, gy.slice_axis(1, start, len)?);
                    start += len;
                }
            }
            Op::SliceChannels { x, start } => {
                let xv = self.value(*x);
                let (n, c, h, w) = xv.dims4()?;
                let len = gy.shape()[1];
                let plane = h * w;
                let mut g = vec![0.0; xv.len()];
                for ni in 0..n {
                    let dst = (ni * c + start) * plane;
                    let src = ni * len * plane;
                    g[dst..dst + len * plane].copy_from_slice(&gy.data()[src..src + len * plane]);
                }
                acc(*x, RealTensor::new(&[n, c, h, w], g)?);
            }
            Op::Fft { x, inverse } => {
                // Unitary transforms: the adjoint is the inverse.
                acc(*x, fft_pairs(gy, !inverse)?);
            }
            Op::Magnitude(a) => {
                let xv = self.value(*a);
                let (n, c2, h, w) = xv.dims4()?;
                let c = c2 / 2;
                let plane = h * w;
                let (xd, md, gd) = (xv.data(), node.value.data(), gy.data());
                let mut g = vec![0.0; xv.len()];
                for ni in 0..n {
                    for ci in 0..c {
                        for j in 0..plane {
                            let mi = (ni * c + ci) * plane + j;
                            let re = (ni * c2 + 2 * ci) * plane + j;
                            let im = re + plane;
                            if md[mi] > 0.0 {
                                g[re] = gd[mi] * xd[re] / md[mi];
                                g[im] = gd[mi] * xd[im] / md[mi];
                            }
                        }
                    }
                }
                acc(*a, RealTensor::new(xv.shape(), g)?);
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x);
                acc(*x, gy.zip_map(xv, |g, x| if x > *lo && x < *hi { g } else { 0.0 })?);
            }
            Op::LogClamped { x, lo, hi } => {
                let xv = self.value(*x);
                acc(*x, gy.zip_map(xv, |g, x| if x > *lo && x < *hi { g / x } else { 0.0 })?);
            }
            Op::GlobalAvgPool(a) => {
                let (n, c, h, w) = self.value(*a).dims4()?;
                let plane = h * w;
                let mut g = vec![0.0; n * c * plane];
                for (j, gv) in gy.data().iter().enumerate() {
                    g[j * plane..(j + 1) * plane].fill(gv / plane as f64);
                }
                acc(*a, RealTensor::new(&[n, c, h, w], g)?);
            }
        }
        Ok(())
    }
}

fn channel_sums(gy: &RealTensor) -> Result<RealTensor> {
    let (n, c, h, w) = gy.dims4()?;
    let plane = h * w;
    let mut out = vec![0.0; c];
    for ni in 0..n {
        for (ci, o) in out.iter_mut().enumerate() {
            *o += gy.data()[(ni * c + ci) * plane..(ni * c + ci + 1) * plane]
                .iter()
                .sum::<f64>();
        }
    }
    RealTensor::new(&[c], out)
}
