//! Generator/discriminator pairs for DAGAN, KIGAN and ReconGAN/RefineGAN.
//!
//! Every family reads a [`Batch`] and produces its reconstruction in a
//! natural image domain: DAGAN a magnitude channel in [0, 1], the others
//! (real, imaginary) channel pairs. Generators use the refinement shortcut
//! `x̂ = G(x) + x`, so zeroing their heads turns them into identity maps.
//!
//! ```
//! use ganrecon::autodiff::{Graph, Mode};
//! use ganrecon::kspace::{make_mask, shepp_logan, Scheme, Target};
//! use ganrecon::models::{build, Batch, Family, ModelSpec};
//!
//! let spec = ModelSpec::test_scale(Family::Dagan);
//! let mut gan = build(&spec, 0).unwrap();
//! let mask = make_mask(Scheme::Cartesian, (32, 32), Target::Acceleration(4.0), 0.08, 1).unwrap();
//! let batch = Batch::from_images(&[shepp_logan(32, 32)], &mask).unwrap();
//! let rec = gan.reconstruct(&batch).unwrap();
//! assert_eq!(rec.last.shape(), &[1, 1, 32, 32]);
//! ```

mod blocks;
mod spec;

use crate::autodiff::{Graph, Mode, ParamStore, Var};
use crate::error::{Error, Result};
use crate::kspace::Mask;
use crate::losses::Channels;
use crate::tensor::io::AnyTensor;
use crate::tensor::{fft2, ifft2, ComplexTensor, RealTensor};

pub use blocks::{BlockStyle, Discriminator, ResidualBlock, Stage, UNet};
pub use spec::{Family, ModelSpec};

use std::collections::BTreeMap;

/// Generator inputs and targets for a batch of N slices sharing one mask.
#[derive(Debug, Clone)]
pub struct Batch {
    /// N×1×H×W fully sampled magnitude images.
    pub target: RealTensor,
    /// N×2×H×W zero-filled images as (re, im) pairs.
    pub zero_filled: RealTensor,
    /// N×2×H×W undersampled k-space, zero off the mask.
    pub y_u: RealTensor,
    /// N×6×H×W undersampled k-space of slices l−1, l, l+1.
    pub neighbours: Option<RealTensor>,
    /// H×W sampling pattern.
    pub mask: RealTensor,
}

fn push_pairs(out: &mut Vec<f64>, z: &ComplexTensor) {
    out.extend(z.data().iter().map(|v| v.re));
    out.extend(z.data().iter().map(|v| v.im));
}

impl Batch {
    /// Single slices without neighbours; KIGAN cannot consume these.
    pub fn from_images(images: &[RealTensor], mask: &Mask) -> Result<Self> {
        let stacks: Vec<[&RealTensor; 3]> = images.iter().map(|x| [x, x, x]).collect();
        let mut b = Self::assemble(&stacks, mask)?;
        b.neighbours = None;
        Ok(b)
    }

    /// Each stack is (previous, centre, next); the centre is the target.
    pub fn from_stacks(stacks: &[[&RealTensor; 3]], mask: &Mask) -> Result<Self> {
        Self::assemble(stacks, mask)
    }

    fn assemble(stacks: &[[&RealTensor; 3]], mask: &Mask) -> Result<Self> {
        if stacks.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let (h, w) = mask.shape();
        let n = stacks.len();
        let mut target = Vec::with_capacity(n * h * w);
        let mut zf = Vec::with_capacity(2 * n * h * w);
        let mut yu = Vec::with_capacity(2 * n * h * w);
        let mut nb = Vec::with_capacity(6 * n * h * w);
        for stack in stacks {
            for (j, x) in stack.iter().enumerate() {
                if x.shape() != [h, w] {
                    return Err(Error::shape(format!("slice {:?} does not match the {h}×{w} mask", x.shape())));
                }
                let y = crate::kspace::forward(&x.to_complex(), mask)?;
                push_pairs(&mut nb, &y);
                if j == 1 {
                    target.extend_from_slice(x.data());
                    push_pairs(&mut yu, &y);
                    push_pairs(&mut zf, &ifft2(&y)?);
                }
            }
        }
        Ok(Self {
            target: RealTensor::new(&[n, 1, h, w], target)?,
            zero_filled: RealTensor::new(&[n, 2, h, w], zf)?,
            y_u: RealTensor::new(&[n, 2, h, w], yu)?,
            neighbours: Some(RealTensor::new(&[n, 6, h, w], nb)?),
            mask: mask.grid().clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.target.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The samples at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Input(format!("sample {i} out of range for {} samples", self.len())));
        }
        let pick = |t: &RealTensor| -> Result<RealTensor> {
            let rows: Vec<RealTensor> = indices.iter().map(|&i| t.slice_axis(0, i, 1)).collect::<Result<_>>()?;
            RealTensor::concat(&rows.iter().collect::<Vec<_>>(), 0)
        };
        Ok(Self {
            target: pick(&self.target)?,
            zero_filled: pick(&self.zero_filled)?,
            y_u: pick(&self.y_u)?,
            neighbours: self.neighbours.as_ref().map(pick).transpose()?,
            mask: self.mask.clone(),
        })
    }

    /// Consecutive chunks of at most `size` samples.
    pub fn chunks(&self, size: usize) -> Result<Vec<Self>> {
        if size == 0 {
            return Err(Error::param("chunk size must be positive"));
        }
        (0..self.len())
            .step_by(size)
            .map(|s| self.select(&(s..(s + size).min(self.len())).collect::<Vec<_>>()))
            .collect()
    }

    /// N×1×H×W magnitude of the zero-filled images.
    pub fn zero_filled_magnitude(&self) -> Result<RealTensor> {
        let (n, _, h, w) = self.zero_filled.dims4()?;
        let plane = h * w;
        let d = self.zero_filled.data();
        let mut out = Vec::with_capacity(n * plane);
        for ni in 0..n {
            let re = &d[2 * ni * plane..(2 * ni + 1) * plane];
            let im = &d[(2 * ni + 1) * plane..(2 * ni + 2) * plane];
            out.extend(re.iter().zip(im).map(|(a, b)| a.hypot(*b)));
        }
        RealTensor::new(&[n, 1, h, w], out)
    }

    /// Targets as (re, im) pairs with zero imaginary part.
    pub fn target_pairs(&self) -> Result<RealTensor> {
        let (n, _, h, w) = self.target.dims4()?;
        let zero = RealTensor::zeros(&[n, 1, h, w]);
        let mut parts = Vec::with_capacity(n);
        for i in 0..n {
            let t = self.target.slice_axis(0, i, 1)?;
            let z = zero.slice_axis(0, i, 1)?;
            parts.push(RealTensor::concat_channels(&[&t, &z])?);
        }
        RealTensor::concat(&parts.iter().collect::<Vec<_>>(), 0)
    }
}

/// DAGAN: one U-Net on magnitude images rescaled to [−1, 1].
#[derive(Debug, Clone)]
pub struct Dagan {
    pub net: UNet,
}

/// KIGAN: a k-space U-Net over three adjacent slices, data consistency,
/// then an image-space refinement U-Net.
#[derive(Debug, Clone)]
pub struct Kigan {
    pub kspace: UNet,
    pub image: UNet,
}

/// ReconGAN/RefineGAN: two chained residual U-Nets.
#[derive(Debug, Clone)]
pub struct ReconRefine {
    pub g1: UNet,
    pub g2: UNet,
}

#[derive(Debug, Clone)]
pub enum Generator {
    Dagan(Dagan),
    Kigan(Kigan),
    ReconRefine(ReconRefine),
}

/// Graph outputs of one generator pass, in the family's image domain.
#[derive(Debug, Clone, Copy)]
pub struct GenOutput {
    pub recon: Var,
    /// `recon` before output clamping (equal to it except for DAGAN).
    pub unclamped: Var,
    /// ReconGAN checkpoint of the chained network.
    pub intermediate: Option<Var>,
    /// KIGAN's merged k-space `Ψ̄·G_K(·) + y_u`, as pairs.
    pub kspace: Option<Var>,
}

impl Dagan {
    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<GenOutput> {
        let u = g.scale(x, 2.0);
        let u = g.add_scalar(u, -1.0);
        let r = self.net.forward(g, store, u, mode)?;
        let s = g.add(r, u)?;
        let to_unit = |g: &mut Graph, v: Var| {
            let v = g.add_scalar(v, 1.0);
            g.scale(v, 0.5)
        };
        let unclamped = to_unit(g, s);
        let c = g.clamp(s, -1.0, 1.0);
        let recon = to_unit(g, c);
        Ok(GenOutput {
            recon,
            unclamped,
            intermediate: None,
            kspace: None,
        })
    }
}

impl Kigan {
    /// `Ψ̄·k + y_u` for N×2×H×W pairs `k`, `y_u` and an H×W mask.
    pub fn merge(g: &mut Graph, k: Var, y_u: Var, mask: &RealTensor) -> Result<Var> {
        let (n, c, h, w) = g.value(k).dims4()?;
        if mask.shape() != [h, w] {
            return Err(Error::shape(format!("mask {:?} for {h}×{w} k-space", mask.shape())));
        }
        let keep = RealTensor::from_fn(&[n, c, h, w], |i| 1.0 - mask.data()[i % (h * w)]);
        let missing = g.mul_const(k, &keep)?;
        g.add(missing, y_u)
    }

    /// Image domain stage: `x̃ = F⁻¹(Ψ̄·k + y_u)`, `x̂ = G_IM(x̃) + x̃`.
    pub fn refine(&self, g: &mut Graph, store: &mut ParamStore, k: Var, y_u: Var, mask: &RealTensor, mode: Mode) -> Result<Var> {
        let merged = Self::merge(g, k, y_u, mask)?;
        self.image_stage(g, store, merged, mode)
    }

    fn image_stage(&self, g: &mut Graph, store: &mut ParamStore, merged: Var, mode: Mode) -> Result<Var> {
        let x_tilde = g.ifft2(merged)?;
        let r = self.image.forward(g, store, x_tilde, mode)?;
        g.add(r, x_tilde)
    }

    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, batch: &Batch, mode: Mode) -> Result<GenOutput> {
        let nb = batch
            .neighbours
            .as_ref()
            .ok_or_else(|| Error::Input("KIGAN needs three adjacent slices per sample".into()))?;
        if nb.dims4()?.1 != 6 {
            return Err(Error::Input("KIGAN needs three adjacent slices per sample".into()));
        }
        let x = g.input(nb.clone());
        let k = self.kspace.forward(g, store, x, mode)?;
        let y = g.input(batch.y_u.clone());
        let merged = Self::merge(g, k, y, &batch.mask)?;
        let recon = self.image_stage(g, store, merged, mode)?;
        Ok(GenOutput {
            recon,
            unclamped: recon,
            intermediate: None,
            kspace: Some(merged),
        })
    }
}

impl ReconRefine {
    pub fn forward(&self, g: &mut Graph, store: &mut ParamStore, x: Var, mode: Mode) -> Result<GenOutput> {
        if g.value(x).dims4()?.1 % 2 != 0 {
            return Err(Error::Input("ReconGAN/RefineGAN input needs (re, im) channel pairs".into()));
        }
        let r1 = self.g1.forward(g, store, x, mode)?;
        let x_bar = g.add(r1, x)?;
        let r2 = self.g2.forward(g, store, x_bar, mode)?;
        let x_hat = g.add(r2, x_bar)?;
        Ok(GenOutput {
            recon: x_hat,
            unclamped: x_hat,
            intermediate: Some(x_bar),
            kspace: None,
        })
    }
}

/// Magnitude reconstructions in [0, 1], N×1×H×W.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub last: RealTensor,
    /// ReconGAN output for the chained family.
    pub intermediate: Option<RealTensor>,
}

/// A generator (or generator chain) with its discriminator. The two own
/// separate parameter stores.
#[derive(Debug, Clone)]
pub struct GanPair {
    pub spec: ModelSpec,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub gen_params: ParamStore,
    pub disc_params: ParamStore,
}

fn check_family(spec: &ModelSpec, want: Family) -> Result<()> {
    spec.validate()?;
    if spec.family != want {
        return Err(Error::Spec(format!("{} spec passed to the {want} builder", spec.family)));
    }
    Ok(())
}

/// U-Net generator of `depth` stride-2 conv stages and as many deconv
/// stages, tanh head; discriminator of `depth + 3` conv layers.
pub fn build_dagan(spec: &ModelSpec, seed: u64) -> Result<GanPair> {
    check_family(spec, Family::Dagan)?;
    let mut gp = ParamStore::new();
    let net = UNet::new(&mut gp, seed, "g", spec, BlockStyle::Plain, 1, 1, true)?;
    let mut dp = ParamStore::new();
    let disc = Discriminator::new(&mut dp, seed, spec, BlockStyle::Plain, 1, 3)?;
    Ok(GanPair {
        spec: spec.clone(),
        generator: Generator::Dagan(Dagan { net }),
        discriminator: disc,
        gen_params: gp,
        disc_params: dp,
    })
}

/// G_K maps 6 k-space channels to 2 without an output activation; G_IM is
/// a tanh-headed refinement on (re, im); discriminator of `depth + 4` conv
/// layers on magnitudes.
pub fn build_kigan(spec: &ModelSpec, seed: u64) -> Result<GanPair> {
    check_family(spec, Family::Kigan)?;
    let mut gp = ParamStore::new();
    let kspace = UNet::new(&mut gp, seed, "gk", spec, BlockStyle::Plain, 6, 2, false)?;
    let image = UNet::new(&mut gp, seed, "gim", spec, BlockStyle::Plain, 2, 2, true)?;
    let mut dp = ParamStore::new();
    let disc = Discriminator::new(&mut dp, seed, spec, BlockStyle::Plain, 1, 4)?;
    Ok(GanPair {
        spec: spec.clone(),
        generator: Generator::Kigan(Kigan { kspace, image }),
        discriminator: disc,
        gen_params: gp,
        disc_params: dp,
    })
}

/// Two chained residual U-Nets on (re, im); the discriminator reuses the
/// encoder path.
pub fn build_recon_refine(spec: &ModelSpec, seed: u64) -> Result<GanPair> {
    check_family(spec, Family::ReconRefine)?;
    let mut gp = ParamStore::new();
    let g1 = UNet::new(&mut gp, seed, "g1", spec, BlockStyle::Residual, 2, 2, true)?;
    let g2 = UNet::new(&mut gp, seed, "g2", spec, BlockStyle::Residual, 2, 2, true)?;
    let mut dp = ParamStore::new();
    let disc = Discriminator::new(&mut dp, seed, spec, BlockStyle::Residual, 2, 0)?;
    Ok(GanPair {
        spec: spec.clone(),
        generator: Generator::ReconRefine(ReconRefine { g1, g2 }),
        discriminator: disc,
        gen_params: gp,
        disc_params: dp,
    })
}

pub fn build(spec: &ModelSpec, seed: u64) -> Result<GanPair> {
    match spec.family {
        Family::Dagan => build_dagan(spec, seed),
        Family::Kigan => build_kigan(spec, seed),
        Family::ReconRefine => build_recon_refine(spec, seed),
    }
}

impl GanPair {
    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// How the FFT should read the reconstruction channels.
    pub fn channels(&self) -> Channels {
        match self.family() {
            Family::Dagan => Channels::Real,
            Family::Kigan | Family::ReconRefine => Channels::Pairs,
        }
    }

    /// The generator's input tensor for `batch`.
    pub fn input_tensor(&self, batch: &Batch) -> Result<RealTensor> {
        match self.family() {
            Family::Dagan => batch.zero_filled_magnitude(),
            Family::Kigan => batch
                .neighbours
                .clone()
                .ok_or_else(|| Error::Input("KIGAN needs three adjacent slices per sample".into())),
            Family::ReconRefine => Ok(batch.zero_filled.clone()),
        }
    }

    /// Ground truth in the reconstruction's domain.
    pub fn target_tensor(&self, batch: &Batch) -> Result<RealTensor> {
        match self.family() {
            Family::Dagan => Ok(batch.target.clone()),
            Family::Kigan | Family::ReconRefine => batch.target_pairs(),
        }
    }

    pub fn generate(&mut self, g: &mut Graph, batch: &Batch, mode: Mode) -> Result<GenOutput> {
        let store = &mut self.gen_params;
        match &self.generator {
            Generator::Dagan(m) => {
                let x = g.input(batch.zero_filled_magnitude()?);
                m.forward(g, store, x, mode)
            }
            Generator::Kigan(m) => m.forward(g, store, batch, mode),
            Generator::ReconRefine(m) => {
                let x = g.input(batch.zero_filled.clone());
                m.forward(g, store, x, mode)
            }
        }
    }

    /// Maps an image in the reconstruction domain to what the
    /// discriminator sees (magnitudes for KIGAN).
    pub fn disc_view(&self, g: &mut Graph, x: Var) -> Result<Var> {
        match self.family() {
            Family::Kigan => g.magnitude(x),
            Family::Dagan | Family::ReconRefine => Ok(x),
        }
    }

    pub fn discriminate(&mut self, g: &mut Graph, x: Var, mode: Mode) -> Result<Var> {
        let v = self.disc_view(g, x)?;
        self.discriminator.forward(g, &mut self.disc_params, v, mode)
    }

    /// Eval-mode reconstruction, as magnitudes clipped to [0, 1].
    pub fn reconstruct(&mut self, batch: &Batch) -> Result<Reconstruction> {
        let mut g = Graph::new();
        let out = self.generate(&mut g, batch, Mode::Eval)?;
        let to_image = |g: &mut Graph, v: Var| -> Result<RealTensor> {
            let m = match self.spec.family {
                Family::Dagan => v,
                Family::Kigan | Family::ReconRefine => g.magnitude(v)?,
            };
            Ok(g.value(m).map(|a| a.abs().clamp(0.0, 1.0)))
        };
        let last = to_image(&mut g, out.recon)?;
        let intermediate = match out.intermediate {
            Some(v) => Some(to_image(&mut g, v)?),
            None => None,
        };
        Ok(Reconstruction { last, intermediate })
    }

    /// Zeroes the output layer of every generator in the pair.
    pub fn zero_generator_heads(&mut self) {
        let store = &mut self.gen_params;
        match &self.generator {
            Generator::Dagan(m) => m.net.zero_head(store),
            Generator::Kigan(m) => {
                m.kspace.zero_head(store);
                m.image.zero_head(store);
            }
            Generator::ReconRefine(m) => {
                m.g1.zero_head(store);
                m.g2.zero_head(store);
            }
        }
    }

    /// Trainable scalars of (generator, discriminator).
    pub fn param_counts(&self) -> (usize, usize) {
        (self.gen_params.num_trainable(), self.disc_params.num_trainable())
    }

    pub fn export(&self) -> Vec<(String, AnyTensor)> {
        let mut v = self.gen_params.export("gen/");
        v.extend(self.disc_params.export("disc/"));
        v
    }

    pub fn import(&mut self, entries: &BTreeMap<String, AnyTensor>) -> Result<()> {
        self.gen_params.import("gen/", entries)?;
        self.disc_params.import("disc/", entries)
    }
}

/// Unitary 2-D FFT of a real image, as a 1×2×H×W pair tensor.
pub fn kspace_pairs(x: &RealTensor) -> Result<RealTensor> {
    let (h, w) = x.dims2()?;
    let k = fft2(&x.to_complex())?;
    let mut out = Vec::with_capacity(2 * h * w);
    push_pairs(&mut out, &k);
    RealTensor::new(&[1, 2, h, w], out)
}
