//! Reconstruction and adversarial losses.
//!
//! Every squared-error loss is `½‖a − b‖²` per image, averaged over the
//! batch axis of N×C×H×W tensors. With the unitary FFT the frequency MSE of
//! two full images equals their image MSE; it differs once the k-space
//! prediction is masked, which is how KIGAN uses it.
//!
//! Each loss exists twice: as plain functions of tensors and as graph
//! builders for training.

use serde::{Deserialize, Serialize};

use crate::autodiff::layers::LRELU_SLOPE;
use crate::autodiff::{he_normal, ConvGeom, Graph, Var};
use crate::error::{Error, Result};
use crate::models::Family;
use crate::rng::Rng;
use crate::tensor::{fft2_batched, ComplexTensor, Element, RealTensor, Tensor};

/// Probabilities are clamped to `[ε, 1 − ε]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Weight of the generator's adversarial term.
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::dagan()
    }
}

impl LossWeights {
    pub fn dagan() -> Self {
        Self {
            alpha: 15.0,
            beta: 0.1,
            gamma: 0.0025,
            adversarial: 1.0,
        }
    }

    pub fn recon_refine() -> Self {
        Self {
            alpha: 10.0,
            beta: 0.1,
            gamma: 0.0,
            adversarial: 1.0,
        }
    }

    /// KIGAN's balance is unpublished; the ReconGAN values are reused.
    pub fn kigan() -> Self {
        Self::recon_refine()
    }

    pub fn for_family(family: Family) -> Self {
        match family {
            Family::Dagan => Self::dagan(),
            Family::Kigan => Self::kigan(),
            Family::ReconRefine => Self::recon_refine(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha, self.beta, self.gamma, self.adversarial];
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::param(format!("loss weights must be non-negative: {self:?}")));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::param("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// Unweighted loss terms of one generator step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub imse: f64,
    pub fmse: f64,
    pub perceptual: f64,
    pub adv: f64,
}

/// Weighted sum of the terms a family uses. The perceptual term only enters
/// DAGAN's total; for ReconGAN/RefineGAN `imse` and `fmse` are expected to
/// already sum both checkpoints.
pub fn l_total(family: Family, w: &LossWeights, p: &LossParts) -> f64 {
    let perceptual = match family {
        Family::Dagan => w.gamma * p.perceptual,
        Family::Kigan | Family::ReconRefine => 0.0,
    };
    w.alpha * p.imse + w.beta * p.fmse + perceptual + w.adversarial * p.adv
}

fn batch_of(shape: &[usize]) -> f64 {
    if shape.len() == 4 {
        shape[0] as f64
    } else {
        1.0
    }
}

/// `½‖x_t − x̂‖²`, batch averaged for rank-4 inputs.
pub fn l_imse<T: Element>(x_t: &Tensor<T>, x_hat: &Tensor<T>) -> Result<f64> {
    Ok(0.5 * x_t.sub(x_hat)?.norm_sqr() / batch_of(x_t.shape()))
}

/// `½‖F x_t − F x̂‖²` with the 2-D FFT over the last two axes.
pub fn l_fmse(x_t: &ComplexTensor, x_hat: &ComplexTensor) -> Result<f64> {
    l_imse(&fft2_batched(x_t)?, &fft2_batched(x_hat)?)
}

pub fn l_perceptual(x_t: &RealTensor, x_hat: &RealTensor, fx: &FeatureExtractor) -> Result<f64> {
    let (a, b) = (fx.apply(x_t)?, fx.apply(x_hat)?);
    if a.shape() != b.shape() {
        return Err(Error::Contract("feature maps differ in shape".into()));
    }
    l_imse(&a, &b)
}

fn check_probs(p: &RealTensor, what: &str) -> Result<()> {
    if p.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Contract(format!("{what} has values outside [0, 1]")));
    }
    Ok(())
}

fn mean_log(p: &RealTensor) -> f64 {
    p.map(|v| v.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()).mean()
}

/// `−mean(log d_real) − mean(log(1 − d_fake))`.
pub fn l_adv_d(d_real: &RealTensor, d_fake: &RealTensor) -> Result<f64> {
    check_probs(d_real, "d_real")?;
    check_probs(d_fake, "d_fake")?;
    Ok(-mean_log(d_real) - mean_log(&d_fake.map(|v| 1.0 - v)))
}

/// Non-saturating `−mean(log d_fake)`, or the minimax `mean(log(1 − d_fake))`.
pub fn l_adv_g(d_fake: &RealTensor, saturating: bool) -> Result<f64> {
    check_probs(d_fake, "d_fake")?;
    Ok(if saturating {
        mean_log(&d_fake.map(|v| 1.0 - v))
    } else {
        -mean_log(d_fake)
    })
}

/// How the channels of an image tensor are to be read by the FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channels {
    /// Every channel is a real image with zero imaginary part.
    Real,
    /// Consecutive (real, imaginary) channel pairs.
    Pairs,
}

/// Graph versions of the losses.
pub mod graph {
    use super::*;

    fn batch(g: &Graph, v: Var) -> f64 {
        batch_of(g.value(v).shape())
    }

    /// `½‖a − b‖²`, batch averaged.
    pub fn imse(g: &mut Graph, target: Var, pred: Var) -> Result<Var> {
        let n = batch(g, target);
        let d = g.sub(pred, target)?;
        let sq = g.square(d);
        let s = g.sum(sq);
        Ok(g.scale(s, 0.5 / n))
    }

    /// Interleaves a zero imaginary channel after every real channel.
    pub fn to_pairs(g: &mut Graph, x: Var) -> Result<Var> {
        let (n, c, h, w) = g.value(x).dims4()?;
        let zero = g.input(RealTensor::zeros(&[n, 1, h, w]));
        let mut parts = Vec::with_capacity(2 * c);
        for ci in 0..c {
            parts.push(g.slice_channels(x, ci, 1)?);
            parts.push(zero);
        }
        g.concat_channels(&parts)
    }

    pub fn fmse(g: &mut Graph, target: Var, pred: Var, channels: Channels) -> Result<Var> {
        let d = g.sub(pred, target)?;
        let d = match channels {
            Channels::Real => to_pairs(g, d)?,
            Channels::Pairs => d,
        };
        let k = g.fft2(d)?;
        let n = batch(g, target);
        let sq = g.square(k);
        let s = g.sum(sq);
        Ok(g.scale(s, 0.5 / n))
    }

    pub fn perceptual(g: &mut Graph, target: Var, pred: Var, fx: &FeatureExtractor) -> Result<Var> {
        let ft = fx.forward(g, target)?;
        let fp = fx.forward(g, pred)?;
        if g.value(ft).shape() != g.value(fp).shape() {
            return Err(Error::Contract("feature maps differ in shape".into()));
        }
        imse(g, ft, fp)
    }

    fn check(g: &Graph, v: Var, what: &str) -> Result<()> {
        check_probs(g.value(v), what)
    }

    fn mean_log(g: &mut Graph, p: Var) -> Var {
        let l = g.log_clamped(p, PROB_EPS, 1.0 - PROB_EPS);
        g.mean(l)
    }

    fn one_minus(g: &mut Graph, p: Var) -> Var {
        let neg = g.scale(p, -1.0);
        g.add_scalar(neg, 1.0)
    }

    pub fn adv_d(g: &mut Graph, d_real: Var, d_fake: Var) -> Result<Var> {
        check(g, d_real, "d_real")?;
        check(g, d_fake, "d_fake")?;
        let a = mean_log(g, d_real);
        let q = one_minus(g, d_fake);
        let b = mean_log(g, q);
        let s = g.add(a, b)?;
        Ok(g.scale(s, -1.0))
    }

    pub fn adv_g(g: &mut Graph, d_fake: Var, saturating: bool) -> Result<Var> {
        check(g, d_fake, "d_fake")?;
        if saturating {
            let q = one_minus(g, d_fake);
            Ok(mean_log(g, q))
        } else {
            let l = mean_log(g, d_fake);
            Ok(g.scale(l, -1.0))
        }
    }

    /// Weighted total; `None` parts are skipped.
    pub fn total(
        g: &mut Graph,
        family: Family,
        w: &LossWeights,
        imse: Option<Var>,
        fmse: Option<Var>,
        perceptual: Option<Var>,
        adv: Option<Var>,
    ) -> Result<Var> {
        let gamma = match family {
            Family::Dagan => w.gamma,
            Family::Kigan | Family::ReconRefine => 0.0,
        };
        let terms = [(imse, w.alpha), (fmse, w.beta), (perceptual, gamma), (adv, w.adversarial)];
        let mut acc: Option<Var> = None;
        for (v, weight) in terms {
            let Some(v) = v else { continue };
            let t = g.scale(v, weight);
            acc = Some(match acc {
                Some(a) => g.add(a, t)?,
                None => t,
            });
        }
        acc.ok_or_else(|| Error::param("total loss has no terms"))
    }
}

#[derive(Debug, Clone)]
enum Extractor {
    Identity,
    RandomConv { layers: Vec<(RealTensor, ConvGeom)> },
}

/// Fixed image → feature map, standing in for a pretrained VGG.
///
/// The random-conv variant is three 3×3 convolutions (8, 16 and 64 maps,
/// strides 1, 2, 2) with leaky ReLU, weights drawn once from its seed. It is
/// never trained: its weights enter graphs as constants.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    kind: Extractor,
    pub in_channels: usize,
    pub seed: u64,
}

impl FeatureExtractor {
    pub fn identity(in_channels: usize) -> Self {
        Self {
            kind: Extractor::Identity,
            in_channels,
            seed: 0,
        }
    }

    pub fn random_conv(in_channels: usize, seed: u64) -> Self {
        let spec = [(8usize, 1usize), (16, 2), (64, 2)];
        let mut cin = in_channels;
        let mut layers = Vec::new();
        for (i, (cout, stride)) in spec.into_iter().enumerate() {
            let mut rng = Rng::derive(seed, &format!("features.{i}"));
            let w = he_normal(&[cout, cin, 3, 3], (cin * 9) as f64, &mut rng);
            layers.push((w, ConvGeom::new(stride, 1)));
            cin = cout;
        }
        Self {
            kind: Extractor::RandomConv { layers },
            in_channels,
            seed,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, Extractor::Identity)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (_, c, _, _) = g.value(x).dims4()?;
        if c != self.in_channels {
            return Err(Error::Contract(format!(
                "feature extractor expects {} channels, got {c}",
                self.in_channels
            )));
        }
        match &self.kind {
            Extractor::Identity => Ok(x),
            Extractor::RandomConv { layers } => {
                let mut h = x;
                for (w, geom) in layers {
                    let wv = g.input(w.clone());
                    h = g.conv2d(h, wv, None, *geom)?;
                    h = g.leaky_relu(h, LRELU_SLOPE);
                }
                Ok(h)
            }
        }
    }

    /// Feature map of an N×C×H×W batch.
    pub fn apply(&self, x: &RealTensor) -> Result<RealTensor> {
        let mut g = Graph::new();
        let v = g.input(x.clone());
        let f = self.forward(&mut g, v)?;
        Ok(g.value(f).clone())
    }

    /// One feature vector per image: the flattened image for the identity
    /// extractor, globally pooled maps (64 values) for the random one.
    pub fn embed(&self, x: &RealTensor) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let v = g.input(x.clone());
        let f = self.forward(&mut g, v)?;
        let (n, c, h, w) = g.value(f).dims4()?;
        let pooled = if self.is_identity() {
            f
        } else {
            g.global_avg_pool(f)?
        };
        let per = if self.is_identity() { c * h * w } else { c };
        Ok(g.value(pooled).data().chunks(per).take(n).map(<[f64]>::to_vec).collect())
    }
}
