//! PSNR, SSIM, RMSE and FID, plus per-cell aggregation.
//!
//! Images are compared as magnitudes in `[0, 1]` (`L = 1`). SSIM is the
//! usual single-scale index averaged over every fully contained 11×11
//! Gaussian window (σ = 1.5).

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::FeatureExtractor;
use crate::tensor::RealTensor;

/// Tables print identical-image PSNR (mathematically +∞) as this value.
pub const PSNR_CAP: f64 = 99.99;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// Diagonal load added to covariances when a set has fewer samples than
/// feature dimensions plus one.
pub const FID_SHRINKAGE: f64 = 1e-6;

pub fn mse(rec: &RealTensor, gt: &RealTensor) -> Result<f64> {
    Ok(rec.sub(gt)?.norm_sqr() / rec.len() as f64)
}

/// `10 log10(L² / MSE)`; `+∞` for identical images.
pub fn psnr(rec: &RealTensor, gt: &RealTensor, data_range: f64) -> Result<f64> {
    let m = mse(rec, gt)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}

/// `√MSE`. Tables report this ×100.
pub fn rmse(rec: &RealTensor, gt: &RealTensor) -> Result<f64> {
    Ok(mse(rec, gt)?.sqrt())
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable weighted sums over every valid window position.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..n).map(|t| k[t] * x[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..n).map(|t| k[t] * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

pub fn ssim(x: &RealTensor, y: &RealTensor) -> Result<f64> {
    ssim_with_range(x, y, 1.0)
}

pub fn ssim_with_range(x: &RealTensor, y: &RealTensor, data_range: f64) -> Result<f64> {
    x.same_shape(y)?;
    let (h, w) = x.dims2()?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::param(format!(
            "SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {h}×{w}"
        )));
    }
    let k = gaussian_window();
    let (xd, yd) = (x.data(), y.data());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { xd.iter().zip(yd).map(|(&a, &b)| f(a, b)).collect() };
    let mx = filter_valid(xd, h, w, &k);
    let my = filter_valid(yd, h, w, &k);
    let mxx = filter_valid(&prod(&|a, _| a * a), h, w, &k);
    let myy = filter_valid(&prod(&|_, b| b * b), h, w, &k);
    let mxy = filter_valid(&prod(&|a, b| a * b), h, w, &k);
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += (2.0 * ux * uy + c1) * (2.0 * cxy + c2) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

fn moments(feats: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = feats.len();
    if n == 0 {
        return Err(Error::param("FID needs a non-empty image set"));
    }
    let d = feats[0].len();
    if feats.iter().any(|f| f.len() != d) {
        return Err(Error::shape("feature vectors differ in length"));
    }
    let x = DMatrix::from_fn(n, d, |i, j| feats[i][j]);
    let mu = x.row_mean().transpose();
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mu[j]);
    let mut cov = centred.transpose() * &centred / (n.max(2) - 1) as f64;
    if n < d + 1 {
        for i in 0..d {
            cov[(i, i)] += FID_SHRINKAGE;
        }
    }
    Ok((mu, cov))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two feature sets.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (mu_a, cov_a) = moments(a)?;
    let (mu_b, cov_b) = moments(b)?;
    if mu_a.len() != mu_b.len() {
        return Err(Error::shape("feature sets differ in dimension"));
    }
    let ra = psd_sqrt(&cov_a);
    let m = &ra * &cov_b * &ra;
    let m = (&m + m.transpose()) * 0.5;
    let tr_sqrt: f64 = SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((mu_a - mu_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt)
}

/// FID between two image sets, each given as N×C×H×W batches.
pub fn fid(set_a: &RealTensor, set_b: &RealTensor, fx: &FeatureExtractor) -> Result<f64> {
    frechet_distance(&fx.embed(set_a)?, &fx.embed(set_b)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageScores {
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
}

pub fn score(rec: &RealTensor, gt: &RealTensor) -> Result<ImageScores> {
    Ok(ImageScores {
        psnr: psnr(rec, gt, 1.0)?,
        ssim: ssim(rec, gt)?,
        rmse: rmse(rec, gt)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::param("cannot aggregate zero values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Summary {
        mean,
        std: var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Psnr,
    Ssim,
    Rmse,
    Fid,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Psnr | Metric::Ssim)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Psnr => "PSNR",
            Metric::Ssim => "SSIM",
            Metric::Rmse => "RMSE",
            Metric::Fid => "FID",
        })
    }
}

/// Results of one (mask, target, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub mask: String,
    pub target: String,
    pub method: String,
    pub images: Vec<ImageScores>,
    pub fid: Option<f64>,
    /// Set when the cell could not be computed.
    pub failure: Option<String>,
}

impl CellResult {
    pub fn failed(mask: &str, target: &str, method: &str, reason: String) -> Self {
        Self {
            mask: mask.into(),
            target: target.into(),
            method: method.into(),
            images: Vec::new(),
            fid: None,
            failure: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub mask: String,
    pub target: String,
    pub method: String,
    pub metric: Metric,
    /// `None` for failed cells.
    pub value: Option<Summary>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub cells: Vec<CellResult>,
}

impl MetricsReport {
    /// One row per cell and metric, in table units: PSNR capped at
    /// [`PSNR_CAP`] per image before averaging, RMSE multiplied by 100.
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut out = Vec::new();
        for cell in &self.cells {
            let mut metrics = vec![Metric::Psnr, Metric::Ssim, Metric::Rmse];
            if cell.fid.is_some() {
                metrics.push(Metric::Fid);
            }
            for metric in metrics {
                let value = if cell.failure.is_some() {
                    None
                } else {
                    let vals: Vec<f64> = match metric {
                        Metric::Psnr => cell.images.iter().map(|s| s.psnr.min(PSNR_CAP)).collect(),
                        Metric::Ssim => cell.images.iter().map(|s| s.ssim).collect(),
                        Metric::Rmse => cell.images.iter().map(|s| s.rmse * 100.0).collect(),
                        Metric::Fid => cell.fid.into_iter().collect(),
                    };
                    summarize(&vals).ok()
                };
                out.push(ReportRow {
                    mask: cell.mask.clone(),
                    target: cell.target.clone(),
                    method: cell.method.clone(),
                    metric,
                    value,
                });
            }
        }
        out
    }

    /// `mask,target,method,metric,mean,std`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("mask,target,method,metric,mean,std\n");
        for r in self.rows() {
            let (m, sd) = match r.value {
                Some(v) => (format!("{:.6}", v.mean), format!("{:.6}", v.std)),
                None => ("failed".into(), "failed".into()),
            };
            s.push_str(&format!("{},{},{},{},{m},{sd}\n", r.mask, r.target, r.method, r.metric));
        }
        s
    }
}
