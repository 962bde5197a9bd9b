//! Central finite-difference gradient checking.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Rounding in a forward pass of loss magnitude `|f|` blurs a central
/// difference by roughly `ulps·ε·|f|/h`; that much disagreement is discounted.
const ROUNDOFF_ULPS: f64 = 32.0;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Finite-difference step, within `[1e-7, 1e-4]`.
    pub step: f64,
    /// Coordinates sampled per parameter tensor; smaller tensors are checked in full.
    pub max_coords_per_param: usize,
    /// Denominator floor: differences between gradients smaller than this in
    /// magnitude are measured absolutely rather than relatively.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            max_coords_per_param: 24,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Worst relative error before the roundoff allowance is subtracted.
    pub max_raw_rel_err: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }
}

/// Compares backprop gradients of `f` against central differences on a
/// sample of coordinates of every trainable parameter in `store`.
///
/// `f` builds a fresh graph and returns its scalar loss; it is evaluated once
/// for the analytic pass and twice per checked coordinate.
pub fn gradcheck<F>(store: &mut ParamStore, mut f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &mut ParamStore) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&opts.step) {
        return Err(Error::param(format!(
            "finite-difference step {} outside [1e-7, 1e-4]",
            opts.step
        )));
    }
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    let f0 = g.scalar(loss);
    g.backward(loss, store)?;
    let analytic: Vec<_> = store.iter().map(|(_, p)| p.grad.clone()).collect();

    let mut eval = |store: &mut ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let loss = f(&mut g, store)?;
        Ok(g.scalar(loss))
    };

    let mut rng = Rng::new(opts.seed);
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_raw_rel_err: 0.0,
        checked: 0,
        worst: None,
    };
    for id in ids {
        let n = store.value(id).len();
        let coords: Vec<usize> = if n <= opts.max_coords_per_param {
            (0..n).collect()
        } else {
            (0..opts.max_coords_per_param).map(|_| rng.below(n)).collect()
        };
        for c in coords {
            let orig = store.value(id).data()[c];
            store.get_mut(id).value.data_mut()[c] = orig + opts.step;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[c] = orig - opts.step;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[id.0].data()[c];
            let denom = a.abs().max(numeric.abs()).max(opts.abs_floor);
            let scale = f0.abs().max(plus.abs()).max(minus.abs());
            let resolution = ROUNDOFF_ULPS * f64::EPSILON * scale / opts.step;
            let rel = ((a - numeric).abs() - resolution).max(0.0) / denom;
            report.max_raw_rel_err = report.max_raw_rel_err.max((a - numeric).abs() / denom);
            report.checked += 1;
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = rel;
                report.worst = Some((store.get(id).name.clone(), c));
            }
        }
    }
    Ok(report)
}
