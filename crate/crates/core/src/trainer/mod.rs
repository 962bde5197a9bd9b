//! Alternating adversarial training, checkpointing and evaluation.
//!
//! Each step draws a batch from a seeded per-epoch permutation of the
//! training samples, runs `d_steps` discriminator updates against detached
//! generator output, then one generator update on the family's total loss.
//! The batch order is a pure function of `(seed, step)`, which is what makes
//! resuming from a checkpoint reproduce an uninterrupted run bit for bit.
//!
//! ```
//! use ganrecon::kspace::{make_mask, shepp_logan, Scheme, Target};
//! use ganrecon::models::{build, Batch, Family, ModelSpec};
//! use ganrecon::trainer::{TrainConfig, Trainer};
//!
//! let mask = make_mask(Scheme::Cartesian, (32, 32), Target::Acceleration(4.0), 0.08, 1).unwrap();
//! let img = shepp_logan(32, 32);
//! let data = Batch::from_images(&[img.clone(), img.scale(0.5)], &mask).unwrap();
//! let gan = build(&ModelSpec::test_scale(Family::Dagan), 0).unwrap();
//! let cfg = TrainConfig { steps: 2, batch_size: 2, ..TrainConfig::default() };
//! let mut trainer = Trainer::new(gan, cfg).unwrap();
//! trainer.run(&data, None, None).unwrap();
//! assert_eq!(trainer.state.curves.len(), 2);
//! ```

mod adam;

pub use adam::{adam_step, Adam, AdamParams};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::checkpoint::{load_checkpoint, save_checkpoint};
use crate::autodiff::{Graph, Mode};
use crate::error::{Error, Result};
use crate::losses::{graph as lg, l_imse, FeatureExtractor, LossWeights};
use crate::metrics::{fid, score, CellResult, MetricsReport, PSNR_CAP};
use crate::models::{Batch, Family, GanPair};
use crate::rng::{derive_seed, Rng};
use crate::tensor::io::AnyTensor;
use crate::tensor::RealTensor;

use adam::scalar_count;

/// Stand-in for the pretrained network behind the perceptual loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    #[default]
    RandomConv,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EarlyStopping {
    /// Steps between validation evaluations.
    pub every: usize,
    /// Evaluations without a PSNR improvement before stopping.
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self { every: 50, patience: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    pub seed: u64,
    /// Steps between checkpoint files; `None` writes none.
    pub checkpoint_every: Option<usize>,
    pub family: Family,
    pub weights: LossWeights,
    /// Use the saturating `log(1 − D(G))` generator loss.
    pub saturating: bool,
    pub features: Features,
    /// Off unless set; needs a validation batch.
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamParams::default();
        Self {
            steps: 2000,
            batch_size: 4,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            d_steps: 1,
            seed: 0,
            checkpoint_every: None,
            family: Family::Dagan,
            weights: LossWeights::dagan(),
            saturating: false,
            features: Features::RandomConv,
            early_stopping: None,
        }
    }
}

impl TrainConfig {
    pub fn for_family(family: Family) -> Self {
        Self {
            family,
            weights: LossWeights::for_family(family),
            ..Self::default()
        }
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// A zero learning rate is accepted so that networks can be frozen.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.steps == 0 || self.batch_size == 0 || self.d_steps == 0 {
            return bad(format!(
                "steps, batch_size and d_steps must be positive (got {}, {}, {})",
                self.steps, self.batch_size, self.d_steps
            ));
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} is not a non-negative number", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("Adam betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) {
            return bad(format!("Adam epsilon must be positive, got {}", self.eps));
        }
        if let Some(es) = self.early_stopping {
            if es.every == 0 || es.patience == 0 {
                return bad("early stopping needs positive every and patience".into());
            }
        }
        self.weights.validate()
    }
}

/// One row of the loss curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub imse: f64,
    pub fmse: f64,
    pub perceptual: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub total: f64,
}

pub const CURVES_HEADER: &str = "step,l_imse,l_fmse,l_perc,l_adv_g,l_adv_d,l_total";

impl LossRecord {
    fn values(&self) -> [f64; 7] {
        [
            self.step as f64,
            self.imse,
            self.fmse,
            self.perceptual,
            self.adv_g,
            self.adv_d,
            self.total,
        ]
    }

    fn from_values(v: &[f64]) -> Result<Self> {
        let step = scalar_count(&RealTensor::scalar(v[0]))? as usize;
        Ok(Self {
            step,
            imse: v[1],
            fmse: v[2],
            perceptual: v[3],
            adv_g: v[4],
            adv_d: v[5],
            total: v[6],
        })
    }
}

pub fn curves_csv(curves: &[LossRecord]) -> String {
    let mut s = format!("{CURVES_HEADER}\n");
    for r in curves {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step, r.imse, r.fmse, r.perceptual, r.adv_g, r.adv_d, r.total
        ));
    }
    s
}

/// Parameters of the best validated model so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub psnr: f64,
    pub params: Vec<(String, AnyTensor)>,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    /// Completed steps.
    pub step: usize,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    pub curves: Vec<LossRecord>,
    /// `(step, mean validation PSNR)` per evaluation.
    pub validations: Vec<(usize, f64)>,
    pub best: Option<Snapshot>,
    pub stopped_early: bool,
}

/// Owns one model and its optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub gan: GanPair,
    pub state: TrainState,
    features: FeatureExtractor,
}

impl Trainer {
    pub fn new(gan: GanPair, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.family != gan.family() {
            return Err(Error::Config(format!(
                "training config is for {} but the model is {}",
                cfg.family,
                gan.family()
            )));
        }
        if gan.gen_params.id() == gan.disc_params.id() {
            return Err(Error::Contract("generator and discriminator share a parameter store".into()));
        }
        let features = match cfg.features {
            Features::RandomConv => FeatureExtractor::random_conv(1, derive_seed(cfg.seed, "features")),
            Features::Identity => FeatureExtractor::identity(1),
        };
        let state = TrainState {
            step: 0,
            gen_opt: Adam::new(&gan.gen_params, cfg.adam()),
            disc_opt: Adam::new(&gan.disc_params, cfg.adam()),
            curves: Vec::new(),
            validations: Vec::new(),
            best: None,
            stopped_early: false,
        };
        Ok(Self {
            cfg,
            gan,
            state,
            features,
        })
    }

    /// Rebuilds a trainer from a checkpoint written by [`Trainer::save`].
    pub fn resume(gan: GanPair, cfg: TrainConfig, path: impl AsRef<Path>) -> Result<Self> {
        let mut t = Self::new(gan, cfg)?;
        let entries = load_checkpoint(path)?;
        t.restore(&entries)?;
        Ok(t)
    }

    /// Sample indices of the batch used at `step`.
    pub fn batch_indices(&self, n: usize, step: usize) -> Vec<usize> {
        let b = self.cfg.batch_size;
        let mut perm: Option<(usize, Vec<usize>)> = None;
        (0..b)
            .map(|j| {
                let pos = step * b + j;
                let epoch = pos / n;
                if perm.as_ref().is_none_or(|(e, _)| *e != epoch) {
                    let mut p: Vec<usize> = (0..n).collect();
                    Rng::derive(self.cfg.seed, &format!("epoch/{epoch}")).shuffle(&mut p);
                    perm = Some((epoch, p));
                }
                perm.as_ref().expect("permutation").1[pos % n]
            })
            .collect()
    }

    /// One discriminator phase and one generator update.
    pub fn step(&mut self, data: &Batch, dump_dir: Option<&Path>) -> Result<LossRecord> {
        if data.is_empty() {
            return Err(Error::Input("no training samples".into()));
        }
        let batch = data.select(&self.batch_indices(data.len(), self.state.step))?;
        let mut adv_d = 0.0;
        for _ in 0..self.cfg.d_steps {
            adv_d = self.discriminator_update(&batch, dump_dir)?;
        }
        let mut rec = self.generator_update(&batch, dump_dir)?;
        rec.adv_d = adv_d;
        self.state.step = rec.step;
        self.state.curves.push(rec);
        Ok(rec)
    }

    /// One discriminator update on real images against detached generator
    /// output. Only discriminator parameters change; generator batch-norm
    /// statistics still track the batch. Returns `l_adv_d`.
    pub fn discriminator_update(&mut self, batch: &Batch, dump_dir: Option<&Path>) -> Result<f64> {
        let step = self.state.step + 1;
        let fake = {
            let mut g = Graph::new();
            let out = self.gan.generate(&mut g, batch, Mode::Train)?;
            g.value(out.recon).clone()
        };
        let mut g = Graph::new();
        let real = g.input(self.gan.target_tensor(batch)?);
        let fake = g.input(fake);
        let d_real = self.gan.discriminate(&mut g, real, Mode::Train)?;
        let d_fake = self.gan.discriminate(&mut g, fake, Mode::Train)?;
        self.check_finite(step, &[("D(real)", mean(&g, d_real)), ("D(fake)", mean(&g, d_fake))], dump_dir)?;
        let loss = lg::adv_d(&mut g, d_real, d_fake)?;
        let adv_d = g.value(loss).data()[0];
        self.check_finite(step, &[("l_adv_d", adv_d)], dump_dir)?;
        g.backward(loss, &mut self.gan.disc_params)?;
        self.state.disc_opt.step(&mut self.gan.disc_params)?;
        Ok(adv_d)
    }

    /// One generator update on the family's total loss; the step counter
    /// and curves are left to [`Trainer::step`]. `adv_d` is reported as 0.
    pub fn generator_update(&mut self, batch: &Batch, dump_dir: Option<&Path>) -> Result<LossRecord> {
        let step = self.state.step + 1;
        let w = self.cfg.weights;
        let family = self.gan.family();
        let mut g = Graph::new();
        let out = self.gan.generate(&mut g, batch, Mode::Train)?;
        let t = g.input(self.gan.target_tensor(batch)?);
        let mut imse = lg::imse(&mut g, t, out.recon)?;
        let mut fmse = match out.kspace {
            // KIGAN compares the merged k-space with the full one.
            Some(k) => {
                let y_t = g.fft2(t)?;
                lg::imse(&mut g, y_t, k)?
            }
            None => lg::fmse(&mut g, t, out.recon, self.gan.channels())?,
        };
        if let Some(mid) = out.intermediate {
            let i2 = lg::imse(&mut g, t, mid)?;
            let f2 = lg::fmse(&mut g, t, mid, self.gan.channels())?;
            imse = g.add(imse, i2)?;
            fmse = g.add(fmse, f2)?;
        }
        let perceptual = if family == Family::Dagan && w.gamma > 0.0 {
            Some(lg::perceptual(&mut g, t, out.recon, &self.features)?)
        } else {
            None
        };
        let adv = if w.adversarial > 0.0 {
            let d_fake = self.gan.discriminate(&mut g, out.recon, Mode::Train)?;
            self.check_finite(step, &[("D(fake)", mean(&g, d_fake))], dump_dir)?;
            Some(lg::adv_g(&mut g, d_fake, self.cfg.saturating)?)
        } else {
            None
        };
        let total = lg::total(&mut g, family, &w, Some(imse), Some(fmse), perceptual, adv)?;
        let val = |v: Option<_>| v.map_or(0.0, |v| g.value(v).data()[0]);
        let rec = LossRecord {
            step,
            imse: val(Some(imse)),
            fmse: val(Some(fmse)),
            perceptual: val(perceptual),
            adv_g: val(adv),
            adv_d: 0.0,
            total: val(Some(total)),
        };
        self.check_finite(
            step,
            &[
                ("l_imse", rec.imse),
                ("l_fmse", rec.fmse),
                ("l_perc", rec.perceptual),
                ("l_adv_g", rec.adv_g),
                ("l_total", rec.total),
            ],
            dump_dir,
        )?;
        g.backward(total, &mut self.gan.gen_params)?;
        self.state.gen_opt.step(&mut self.gan.gen_params)?;
        Ok(rec)
    }

    fn check_finite(&self, step: usize, values: &[(&str, f64)], dump_dir: Option<&Path>) -> Result<()> {
        let bad: Vec<String> = values
            .iter()
            .filter(|(_, v)| !v.is_finite())
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        if bad.is_empty() {
            return Ok(());
        }
        let dump = match dump_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join(format!("nonfinite_step{step:06}.mbc"));
                self.save(&path)?;
                Some(path)
            }
            None => None,
        };
        log::error!("non-finite loss at step {step}: {}", bad.join(", "));
        Err(Error::NonFinite {
            step,
            detail: bad.join(", "),
            dump,
        })
    }

    /// Trains until `cfg.steps` steps are complete or early stopping fires.
    ///
    /// With `out_dir`, checkpoints go to `out_dir/checkpoints/` and the loss
    /// curves to `out_dir/losses.csv`.
    pub fn run(&mut self, data: &Batch, validation: Option<&Batch>, out_dir: Option<&Path>) -> Result<()> {
        let es = self.cfg.early_stopping;
        if es.is_some() && validation.is_none() {
            return Err(Error::Config("early stopping needs a validation set".into()));
        }
        while self.state.step < self.cfg.steps && !self.state.stopped_early {
            let rec = self.step(data, out_dir)?;
            if rec.step % 100 == 0 {
                log::debug!("step {}: l_total {:.6}", rec.step, rec.total);
            }
            if let (Some(es), Some(val)) = (es, validation) {
                if rec.step % es.every == 0 {
                    self.validate(val, es.patience)?;
                }
            }
            if let (Some(every), Some(dir)) = (self.cfg.checkpoint_every, out_dir) {
                if rec.step % every == 0 {
                    self.save(Self::checkpoint_path(dir, rec.step))?;
                    fs::write(dir.join("losses.csv"), curves_csv(&self.state.curves))?;
                }
            }
        }
        if self.state.stopped_early {
            self.restore_best()?;
        }
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("losses.csv"), curves_csv(&self.state.curves))?;
        }
        Ok(())
    }

    pub fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
        dir.join("checkpoints").join(format!("step{step:06}.mbc"))
    }

    fn validate(&mut self, val: &Batch, patience: usize) -> Result<()> {
        let psnr = mean_psnr(&mut self.gan, val)?;
        let step = self.state.step;
        self.state.validations.push((step, psnr));
        if self.state.best.as_ref().is_none_or(|b| psnr > b.psnr) {
            self.state.best = Some(Snapshot {
                step,
                psnr,
                params: self.gan.export(),
            });
        }
        let best_step = self.state.best.as_ref().map_or(step, |b| b.step);
        let since = self.state.validations.iter().filter(|(s, _)| *s > best_step).count();
        if since >= patience {
            log::info!("early stop at step {step}: best PSNR at step {best_step}");
            self.state.stopped_early = true;
        }
        Ok(())
    }

    /// Loads the best validated parameters, if any.
    pub fn restore_best(&mut self) -> Result<()> {
        if let Some(b) = &self.state.best {
            let map: BTreeMap<String, AnyTensor> = b.params.iter().cloned().collect();
            self.gan.import(&map)?;
        }
        Ok(())
    }

    pub fn curves_csv(&self) -> String {
        curves_csv(&self.state.curves)
    }

    /// Everything needed to resume: parameters, buffers, optimizer moments,
    /// the step counter, loss curves and the validation history.
    pub fn checkpoint_entries(&self) -> Result<Vec<(String, AnyTensor)>> {
        let s = &self.state;
        let mut out = self.gan.export();
        out.extend(s.gen_opt.export("opt/gen/"));
        out.extend(s.disc_opt.export("opt/disc/"));
        out.push(("state/step".into(), AnyTensor::Real(RealTensor::scalar(s.step as f64))));
        // Tensors cannot have zero extents, so empty histories are omitted.
        if !s.curves.is_empty() {
            let rows: Vec<f64> = s.curves.iter().flat_map(|r| r.values()).collect();
            out.push((
                "state/curves".into(),
                AnyTensor::Real(RealTensor::new(&[s.curves.len(), 7], rows)?),
            ));
        }
        if !s.validations.is_empty() {
            let vals: Vec<f64> = s.validations.iter().flat_map(|&(st, p)| [st as f64, p]).collect();
            out.push((
                "state/validations".into(),
                AnyTensor::Real(RealTensor::new(&[s.validations.len(), 2], vals)?),
            ));
        }
        if let Some(b) = &s.best {
            out.push((
                "state/best".into(),
                AnyTensor::Real(RealTensor::new(&[2], vec![b.step as f64, b.psnr])?),
            ));
            out.extend(b.params.iter().map(|(n, t)| (format!("best/{n}"), t.clone())));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        if let Some(parent) = path.as_ref().parent() {
            fs::create_dir_all(parent)?;
        }
        save_checkpoint(path, &self.checkpoint_entries()?)
    }

    fn restore(&mut self, entries: &BTreeMap<String, AnyTensor>) -> Result<()> {
        let real = |key: &str| match entries.get(key) {
            Some(AnyTensor::Real(t)) => Ok(t.clone()),
            _ => Err(Error::Format(format!("checkpoint lacks {key}"))),
        };
        self.gan.import(entries)?;
        self.state.gen_opt.import("opt/gen/", entries)?;
        self.state.disc_opt.import("opt/disc/", entries)?;
        self.state.step = scalar_count(&real("state/step")?)? as usize;
        let history = |key: &str, width: usize| match entries.get(key) {
            None => Ok(Vec::new()),
            Some(AnyTensor::Real(t)) if t.rank() == 2 && t.shape()[1] == width => Ok(t.data().to_vec()),
            Some(_) => Err(Error::Format(format!("{key} must be a k×{width} real tensor"))),
        };
        self.state.curves = history("state/curves", 7)?
            .chunks(7)
            .map(LossRecord::from_values)
            .collect::<Result<_>>()?;
        self.state.validations = history("state/validations", 2)?
            .chunks(2)
            .map(|c| Ok((scalar_count(&RealTensor::scalar(c[0]))? as usize, c[1])))
            .collect::<Result<_>>()?;
        self.state.best = match entries.get("state/best") {
            Some(AnyTensor::Real(b)) if b.len() == 2 => {
                let params = self
                    .gan
                    .export()
                    .into_iter()
                    .map(|(n, _)| {
                        let key = format!("best/{n}");
                        entries
                            .get(&key)
                            .cloned()
                            .map(|t| (n, t))
                            .ok_or_else(|| Error::Format(format!("checkpoint lacks {key}")))
                    })
                    .collect::<Result<_>>()?;
                Some(Snapshot {
                    step: scalar_count(&RealTensor::scalar(b.data()[0]))? as usize,
                    psnr: b.data()[1],
                    params,
                })
            }
            _ => None,
        };
        Ok(())
    }
}

fn mean(g: &Graph, v: crate::autodiff::Var) -> f64 {
    g.value(v).mean()
}

/// Builds a trainer and runs it to completion.
pub fn train(gan: GanPair, data: &Batch, cfg: TrainConfig) -> Result<Trainer> {
    let mut t = Trainer::new(gan, cfg)?;
    t.run(data, None, None)?;
    Ok(t)
}

/// Names of the outputs a family reports, last output first for chains.
pub fn method_names(family: Family) -> &'static [&'static str] {
    match family {
        Family::Dagan => &["dagan"],
        Family::Kigan => &["kigan"],
        Family::ReconRefine => &["recon", "refine"],
    }
}

const EVAL_CHUNK: usize = 8;

/// Eval-mode magnitude reconstructions (N×1×H×W) per reported method.
pub fn infer(gan: &mut GanPair, test: &Batch) -> Result<Vec<(&'static str, RealTensor)>> {
    let names = method_names(gan.family());
    let mut last = Vec::new();
    let mut mid = Vec::new();
    for chunk in test.chunks(EVAL_CHUNK)? {
        let r = gan.reconstruct(&chunk)?;
        last.push(r.last);
        if let Some(m) = r.intermediate {
            mid.push(m);
        }
    }
    let cat = |v: &[RealTensor]| RealTensor::concat(&v.iter().collect::<Vec<_>>(), 0);
    Ok(match names {
        [only] => vec![(*only, cat(&last)?)],
        [first, second] => vec![(*first, cat(&mid)?), (*second, cat(&last)?)],
        _ => unreachable!("one or two outputs per family"),
    })
}

fn plane(t: &RealTensor, i: usize) -> Result<RealTensor> {
    let (_, _, h, w) = t.dims4()?;
    t.slice_axis(0, i, 1)?.reshape(&[h, w])
}

/// Scores N×1×H×W reconstructions against targets as one report cell.
pub fn score_cell(
    (mask, target, method): (&str, &str, &str),
    recon: &RealTensor,
    truth: &RealTensor,
    fid_features: Option<&FeatureExtractor>,
) -> Result<CellResult> {
    recon.same_shape(truth)?;
    let n = recon.dims4()?.0;
    let images = (0..n)
        .map(|i| score(&plane(recon, i)?, &plane(truth, i)?))
        .collect::<Result<Vec<_>>>()?;
    let fid = match fid_features {
        Some(fx) => Some(fid(recon, truth, fx)?),
        None => None,
    };
    Ok(CellResult {
        mask: mask.into(),
        target: target.into(),
        method: method.into(),
        images,
        fid,
        failure: None,
    })
}

/// Eval-mode metrics per image, one cell per reported output.
pub fn evaluate(
    gan: &mut GanPair,
    test: &Batch,
    mask: &str,
    target: &str,
    fid_features: Option<&FeatureExtractor>,
) -> Result<MetricsReport> {
    let cells = infer(gan, test)?
        .into_iter()
        .map(|(method, rec)| score_cell((mask, target, method), &rec, &test.target, fid_features))
        .collect::<Result<_>>()?;
    Ok(MetricsReport { cells })
}

/// Batch-averaged `½‖|x̂| − x_t‖²` of each reported output on magnitudes.
pub fn validation_imse(gan: &mut GanPair, val: &Batch) -> Result<Vec<(&'static str, f64)>> {
    infer(gan, val)?
        .into_iter()
        .map(|(m, rec)| Ok((m, l_imse(&val.target, &rec)?)))
        .collect()
}

fn mean_psnr(gan: &mut GanPair, val: &Batch) -> Result<f64> {
    let report = evaluate(gan, val, "", "", None)?;
    let cell = report.cells.last().ok_or_else(|| Error::Contract("empty report".into()))?;
    Ok(cell.images.iter().map(|s| s.psnr.min(PSNR_CAP)).sum::<f64>() / cell.images.len() as f64)
}
