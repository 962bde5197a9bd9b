use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{zero_fill, Mask};
use crate::rng::Rng;
use crate::tensor::{fft2, ifft2, ComplexTensor, RealTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DictConfig {
    /// Patch side length; patches overlap with stride 1.
    pub patch: usize,
    pub atoms: usize,
    /// Maximum nonzeros per patch code.
    pub sparsity: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for DictConfig {
    fn default() -> Self {
        Self {
            patch: 6,
            atoms: 64,
            sparsity: 4,
            iters: 10,
            seed: 0,
        }
    }
}

/// Unit-norm atoms stored as the columns of a P×K matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    pub patch: usize,
    pub sparsity: usize,
}

impl Dictionary {
    /// Normalizes the columns of `atoms` (P×K, P = patch²).
    pub fn new(atoms: &RealTensor, patch: usize, sparsity: usize) -> Result<Self> {
        let (p, k) = atoms.dims2()?;
        if p != patch * patch {
            return Err(Error::shape(format!("{p} atom rows for a {patch}×{patch} patch")));
        }
        let mut m = DMatrix::from_row_slice(p, k, atoms.data());
        for mut c in m.column_iter_mut() {
            let n = c.norm();
            if n == 0.0 {
                return Err(Error::param("dictionary atoms must be non-zero"));
            }
            c /= n;
        }
        Ok(Self {
            atoms: m,
            patch,
            sparsity,
        })
    }

    /// Separable 2-D DCT-II atoms on a √K×√K frequency grid (K rounded up
    /// to a square), truncated to `atoms` columns. All but the constant atom
    /// are made zero-mean.
    pub fn overcomplete_dct(patch: usize, atoms: usize, sparsity: usize) -> Self {
        let side = (atoms as f64).sqrt().ceil() as usize;
        let basis = DMatrix::from_fn(patch, side, |i, f| {
            (std::f64::consts::PI * f as f64 * (i as f64 + 0.5) / side as f64).cos()
        });
        let p = patch * patch;
        let mut m = DMatrix::zeros(p, atoms);
        for k in 0..atoms {
            let (fa, fb) = (k / side, k % side);
            let mut col = DVector::from_fn(p, |r, _| basis[(r / patch, fa)] * basis[(r % patch, fb)]);
            if fa + fb > 0 {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
            let n = col.norm();
            m.set_column(k, &(col / n));
        }
        Self {
            atoms: m,
            patch,
            sparsity,
        }
    }

    /// Atoms as a P×K tensor.
    pub fn atoms(&self) -> RealTensor {
        let (p, k) = self.atoms.shape();
        RealTensor::from_fn(&[p, k], |i| self.atoms[(i / k, i % k)])
    }

    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.atoms.column_iter().map(|c| c.norm()).collect()
    }

    /// Orthogonal matching pursuit: up to `sparsity` atoms, stopping early
    /// once the residual vanishes.
    pub fn omp(&self, x: &DVector<f64>) -> Vec<(usize, f64)> {
        let mut support: Vec<usize> = Vec::new();
        let mut coef = DVector::zeros(0);
        let mut residual = x.clone();
        let scale = x.norm().max(1.0);
        while support.len() < self.sparsity.min(self.len()) {
            if residual.norm() <= 1e-12 * scale {
                break;
            }
            let corr = self.atoms.tr_mul(&residual);
            let best = (0..self.len())
                .filter(|k| !support.contains(k))
                .max_by(|&a, &b| corr[a].abs().total_cmp(&corr[b].abs()));
            let Some(best) = best else { break };
            if corr[best].abs() <= 1e-14 * scale {
                break;
            }
            support.push(best);
            let sub = self.atoms.select_columns(&support);
            coef = least_squares(&sub, x);
            residual = x - &sub * &coef;
        }
        support.into_iter().zip(coef.iter().copied()).collect()
    }
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let gram = a.tr_mul(a);
    let rhs = a.tr_mul(b);
    match Cholesky::new(gram) {
        Some(c) => c.solve(&rhs),
        None => a
            .clone()
            .svd(true, true)
            .solve(b, 1e-12)
            .expect("SVD computed with both factors"),
    }
}

fn extract_patches(x: &RealTensor, patch: usize) -> Result<DMatrix<f64>> {
    let (h, w) = x.dims2()?;
    if patch == 0 || patch > h || patch > w {
        return Err(Error::param(format!("patch side {patch} does not fit a {h}×{w} image")));
    }
    let (ph, pw) = (h - patch + 1, w - patch + 1);
    let d = x.data();
    Ok(DMatrix::from_fn(patch * patch, ph * pw, |r, c| {
        let (pi, pj) = (c / pw, c % pw);
        d[(pi + r / patch) * w + pj + r % patch]
    }))
}

fn average_patches(cols: &DMatrix<f64>, h: usize, w: usize, patch: usize) -> RealTensor {
    let (ph, pw) = (h - patch + 1, w - patch + 1);
    let mut acc = vec![0.0; h * w];
    let mut cnt = vec![0.0; h * w];
    for c in 0..ph * pw {
        let (pi, pj) = (c / pw, c % pw);
        for r in 0..patch * patch {
            let idx = (pi + r / patch) * w + pj + r % patch;
            acc[idx] += cols[(r, c)];
            cnt[idx] += 1.0;
        }
    }
    RealTensor::new(&[h, w], acc.iter().zip(&cnt).map(|(a, n)| a / n).collect()).expect("shape")
}

/// Replaces the sampled coefficients of `F x` with `y_u`; returns the real part.
fn project(x: &RealTensor, y_u: &ComplexTensor, mask: &Mask) -> Result<RealTensor> {
    let k = fft2(&x.to_complex())?;
    let merged = crate::kspace::data_consistency(&k, y_u, mask)?;
    Ok(ifft2(&merged)?.real())
}

/// Sparse codes of every patch as a K×M matrix.
fn code_all(dict: &Dictionary, patches: &DMatrix<f64>) -> DMatrix<f64> {
    let mut codes = DMatrix::zeros(dict.len(), patches.ncols());
    for (c, col) in patches.column_iter().enumerate() {
        for (k, a) in dict.omp(&col.into_owned()) {
            codes[(k, c)] = a;
        }
    }
    codes
}

fn update_atoms(dict: &mut Dictionary, patches: &DMatrix<f64>, codes: &mut DMatrix<f64>, rng: &mut Rng) {
    for k in 0..dict.len() {
        let users: Vec<usize> = (0..codes.ncols()).filter(|&c| codes[(k, c)] != 0.0).collect();
        let mut new_atom = None;
        if !users.is_empty() {
            let a: DVector<f64> = DVector::from_iterator(users.len(), users.iter().map(|&c| codes[(k, c)]));
            // Residual of the using patches without atom k's contribution.
            let mut e = patches.select_columns(&users) - &dict.atoms * codes.select_columns(&users);
            e += dict.atoms.column(k) * a.transpose();
            let d = &e * &a / a.norm_squared();
            let n = d.norm();
            if n > 1e-12 {
                for (i, &c) in users.iter().enumerate() {
                    codes[(k, c)] = a[i] * n;
                }
                new_atom = Some(d / n);
            }
        }
        let atom = match new_atom {
            Some(d) => d,
            None => {
                for c in 0..codes.ncols() {
                    codes[(k, c)] = 0.0;
                }
                reseed(dict, patches, codes, rng)
            }
        };
        dict.atoms.set_column(k, &atom);
    }
}

/// A unit-norm atom from the residual of a random patch; a random direction
/// if that residual is zero.
fn reseed(dict: &Dictionary, patches: &DMatrix<f64>, codes: &DMatrix<f64>, rng: &mut Rng) -> DVector<f64> {
    let c = rng.below(patches.ncols());
    let r = patches.column(c) - &dict.atoms * codes.column(c);
    let n = r.norm();
    if n > 1e-12 {
        return r / n;
    }
    let v = DVector::from_fn(patches.nrows(), |_, _| rng.normal());
    let n = v.norm();
    v / n
}

/// Alternates patch sparse coding, atom updates and a data-consistent image
/// update for `cfg.iters` rounds, starting from the real zero-filled image
/// and an overcomplete DCT dictionary.
pub fn dict_reconstruct(y_u: &ComplexTensor, mask: &Mask, cfg: &DictConfig) -> Result<RealTensor> {
    let dict = Dictionary::overcomplete_dct(cfg.patch, cfg.atoms, cfg.sparsity);
    Ok(dict_reconstruct_with(y_u, mask, cfg, dict)?.0)
}

/// As [`dict_reconstruct`] but starting from `dict`; also returns the
/// learned dictionary.
pub fn dict_reconstruct_with(
    y_u: &ComplexTensor,
    mask: &Mask,
    cfg: &DictConfig,
    mut dict: Dictionary,
) -> Result<(RealTensor, Dictionary)> {
    let (h, w) = y_u.dims2()?;
    if mask.shape() != (h, w) {
        return Err(Error::shape("k-space and mask differ in shape"));
    }
    if dict.patch != cfg.patch || cfg.iters == 0 {
        return Err(Error::param("dictionary patch size or iteration count invalid"));
    }
    let mut rng = Rng::derive(cfg.seed, "dict");
    let mut x = zero_fill(y_u)?.real();
    for _ in 0..cfg.iters {
        let patches = extract_patches(&x, cfg.patch)?;
        let mut codes = code_all(&dict, &patches);
        if cfg.sparsity > 0 {
            update_atoms(&mut dict, &patches, &mut codes, &mut rng);
        }
        let approx = &dict.atoms * &codes;
        x = project(&average_patches(&approx, h, w, cfg.patch), y_u, mask)?;
    }
    Ok((x, dict))
}
