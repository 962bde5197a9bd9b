use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{forward, zero_fill, Mask};
use crate::tensor::{fft2, ifft2, ComplexTensor, RealTensor};

/// Smoothing of the TV absolute value, `|g| ≈ √(g² + μ²)`.
pub const TV_SMOOTHING: f64 = 1e-6;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TvConfig {
    /// Weight of the data-fidelity term.
    pub lambda: f64,
    /// Initial (and maximal) step size.
    pub step: f64,
    pub iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            lambda: 100.0,
            step: 0.05,
            iters: 200,
            tol: 1e-6,
        }
    }
}

impl TvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.step > 0.0 && self.iters > 0 && self.tol > 0.0) {
            return Err(Error::param(format!("TV settings must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvTracePoint {
    pub objective: f64,
    pub data_term: f64,
    pub tv_term: f64,
}

#[derive(Debug, Clone)]
pub struct TvResult {
    pub image: RealTensor,
    /// Objective at the start and after every accepted iteration.
    pub trace: Vec<TvTracePoint>,
}

impl TvResult {
    /// `iteration,objective,data_term,tv_term`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,objective,data_term,tv_term\n");
        for (i, p) in self.trace.iter().enumerate() {
            let _ = writeln!(s, "{i},{:e},{:e},{:e}", p.objective, p.data_term, p.tv_term);
        }
        s
    }
}

struct Problem<'a> {
    y_u: &'a ComplexTensor,
    mask: &'a Mask,
    lambda: f64,
    h: usize,
    w: usize,
}

impl Problem<'_> {
    fn residual(&self, x: &RealTensor) -> Result<ComplexTensor> {
        forward(&x.to_complex(), self.mask)?.sub(self.y_u)
    }

    fn diffs(&self, x: &RealTensor) -> (Vec<f64>, Vec<f64>) {
        let (h, w) = (self.h, self.w);
        let d = x.data();
        let mut gx = vec![0.0; h * w];
        let mut gy = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                let v = d[i * w + j];
                gx[i * w + j] = d[i * w + (j + 1) % w] - v;
                gy[i * w + j] = d[((i + 1) % h) * w + j] - v;
            }
        }
        (gx, gy)
    }

    fn evaluate(&self, x: &RealTensor) -> Result<TvTracePoint> {
        let data_term = 0.5 * self.lambda * self.residual(x)?.norm_sqr();
        let (gx, gy) = self.diffs(x);
        let mu2 = TV_SMOOTHING * TV_SMOOTHING;
        let tv_term = gx.iter().chain(&gy).map(|g| (g * g + mu2).sqrt()).sum();
        Ok(TvTracePoint {
            objective: data_term + tv_term,
            data_term,
            tv_term,
        })
    }

    fn gradient(&self, x: &RealTensor) -> Result<RealTensor> {
        // λ·Re(Fᴴ Ψ (ΨFx − y_u)); the residual is already zero off the mask.
        let data = ifft2(&self.residual(x)?)?.real().scale(self.lambda);
        let (gx, gy) = self.diffs(x);
        let mu2 = TV_SMOOTHING * TV_SMOOTHING;
        let px: Vec<f64> = gx.iter().map(|g| g / (g * g + mu2).sqrt()).collect();
        let py: Vec<f64> = gy.iter().map(|g| g / (g * g + mu2).sqrt()).collect();
        let (h, w) = (self.h, self.w);
        // Adjoint of the circular forward difference.
        let tv = RealTensor::from_fn(&[h, w], |k| {
            let (i, j) = (k / w, k % w);
            px[i * w + (j + w - 1) % w] - px[k] + py[((i + h - 1) % h) * w + j] - py[k]
        });
        data.add(&tv)
    }
}

/// Minimizes `(λ/2)‖y_u − ΨFx‖² + Σ√(|∇x|² + μ²)` over real images by
/// gradient descent. A step that does not lower the objective is halved
/// until it does; the next iteration tries twice the accepted step, capped
/// at `cfg.step`.
pub fn tv_reconstruct(y_u: &ComplexTensor, mask: &Mask, cfg: &TvConfig) -> Result<TvResult> {
    cfg.validate()?;
    let (h, w) = y_u.dims2()?;
    if mask.shape() != (h, w) {
        return Err(Error::shape("k-space and mask differ in shape"));
    }
    let p = Problem {
        y_u,
        mask,
        lambda: cfg.lambda,
        h,
        w,
    };
    let mut x = zero_fill(y_u)?.real();
    let mut cur = p.evaluate(&x)?;
    let mut trace = vec![cur];
    let mut step = cfg.step;
    for it in 0..cfg.iters {
        let g = p.gradient(&x)?;
        if g.norm_sqr() == 0.0 {
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = x.sub(&g.scale(step))?;
            let val = p.evaluate(&cand)?;
            if val.objective <= cur.objective {
                accepted = Some((cand, val));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, val)) = accepted else {
            return Err(Error::Solver {
                iteration: it,
                trace: trace.iter().map(|t| t.objective).collect(),
            });
        };
        let rel = (cur.objective - val.objective) / cur.objective.abs().max(f64::MIN_POSITIVE);
        x = cand;
        cur = val;
        trace.push(cur);
        if rel < cfg.tol {
            break;
        }
        step = (step * 2.0).min(cfg.step);
    }
    Ok(TvResult { image: x, trace })
}

/// Masked k-space residual `‖Ψ(Fx − y_u)‖₂` of a real image.
pub fn data_residual(x: &RealTensor, y_u: &ComplexTensor, mask: &Mask) -> Result<f64> {
    let k = fft2(&x.to_complex())?;
    let mut s = 0.0;
    for ((v, y), &m) in k.data().iter().zip(y_u.data()).zip(mask.grid().data()) {
        if m == 1.0 {
            s += (v - y).norm_sqr();
        }
    }
    Ok(s.sqrt())
}
