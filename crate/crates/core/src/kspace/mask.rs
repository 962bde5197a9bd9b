//! Undersampling masks.
//!
//! All masks are stored with DC at index (0,0). Generators work on a centered
//! grid (DC at ⌊H/2⌋, ⌊W/2⌋) and unshift at the end.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::RealTensor;

/// Golden angle for spoke ordering, 180°·(√5−1)/2 ≈ 111.246°.
pub const GOLDEN_ANGLE_DEG: f64 = 111.246_117_974_981_07;

/// Rasterized schemes must land within this many percentage points of target.
pub const RATE_TOLERANCE_PP: f64 = 0.5;

pub const DEFAULT_CENTER_FRACTION: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Cartesian,
    Radial,
    Spiral,
    Full,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Cartesian => "cartesian",
            Scheme::Radial => "radial",
            Scheme::Spiral => "spiral",
            Scheme::Full => "full",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cartesian" => Ok(Scheme::Cartesian),
            "radial" => Ok(Scheme::Radial),
            "spiral" => Ok(Scheme::Spiral),
            "full" => Ok(Scheme::Full),
            other => Err(Error::param(format!("unknown mask scheme {other:?}"))),
        }
    }
}

/// Requested undersampling: an acceleration factor for Cartesian masks, a
/// sampling rate for the rasterized ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Acceleration(f64),
    Rate(f64),
    Full,
}

impl Target {
    /// Table label: `2X` for accelerations, `30%` for rates.
    pub fn label(&self) -> String {
        match self {
            Target::Acceleration(af) => format!("{}X", fmt_num(*af)),
            Target::Rate(r) => format!("{}%", fmt_num(r * 100.0)),
            Target::Full => "full".to_string(),
        }
    }

    /// Interprets a bare number for `scheme`: an acceleration factor for
    /// Cartesian, a rate for radial and spiral.
    pub fn for_scheme(scheme: Scheme, value: f64) -> Self {
        match scheme {
            Scheme::Cartesian => Target::Acceleration(value),
            Scheme::Radial | Scheme::Spiral => Target::Rate(value),
            Scheme::Full => Target::Full,
        }
    }
}

fn fmt_num(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    grid: RealTensor,
    pub scheme: Scheme,
    pub target: Target,
    pub achieved_rate: f64,
    pub seed: u64,
}

impl Mask {
    fn from_grid(grid: RealTensor, scheme: Scheme, target: Target, seed: u64) -> Self {
        let achieved_rate = grid.sum() / grid.len() as f64;
        Self {
            grid,
            scheme,
            target,
            achieved_rate,
            seed,
        }
    }

    pub fn full(h: usize, w: usize) -> Self {
        Self::from_grid(RealTensor::full(&[h, w], 1.0), Scheme::Full, Target::Full, 0)
    }

    /// Wraps an arbitrary binary grid; entries must be 0 or 1.
    pub fn from_binary(grid: RealTensor, scheme: Scheme, target: Target) -> Result<Self> {
        grid.dims2()?;
        if grid.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::param("mask entries must be 0 or 1"));
        }
        Ok(Self::from_grid(grid, scheme, target, 0))
    }

    pub fn grid(&self) -> &RealTensor {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grid.dims2().expect("masks are 2-D")
    }

    pub fn count(&self) -> usize {
        self.grid.data().iter().filter(|&&v| v == 1.0).count()
    }

    pub fn is_sampled(&self, i: usize, j: usize) -> bool {
        self.grid.at(&[i, j]) == 1.0
    }

    /// Complement `1 − Ψ`.
    pub fn complement(&self) -> RealTensor {
        self.grid.map(|v| 1.0 - v)
    }
}

/// Centered-grid coordinate to DC-at-origin storage index.
fn unshift(c: usize, n: usize) -> usize {
    (c + n - n / 2) % n
}

struct Raster {
    h: usize,
    w: usize,
    grid: Vec<bool>,
    count: usize,
}

impl Raster {
    fn new(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            grid: vec![false; h * w],
            count: 0,
        }
    }

    /// Marks the centered-grid point nearest to `(y, x)`; returns its storage
    /// index if it was newly set.
    fn mark(&mut self, y: f64, x: f64) -> Option<usize> {
        let (cy, cx) = (y.round(), x.round());
        if cy < 0.0 || cx < 0.0 || cy >= self.h as f64 || cx >= self.w as f64 {
            return None;
        }
        let i = unshift(cy as usize, self.h) * self.w + unshift(cx as usize, self.w);
        if self.grid[i] {
            None
        } else {
            self.grid[i] = true;
            self.count += 1;
            Some(i)
        }
    }

    fn into_tensor(self) -> RealTensor {
        let data = self.grid.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        RealTensor::new(&[self.h, self.w], data).expect("raster shape")
    }

    /// Randomly unmarks samples from `recent` (never DC) until `count <= goal`.
    fn trim(&mut self, recent: &mut Vec<usize>, goal: usize, rng: &mut Rng) {
        recent.retain(|&i| i != 0);
        while self.count > goal && !recent.is_empty() {
            let k = rng.below(recent.len());
            let i = recent.swap_remove(k);
            self.grid[i] = false;
            self.count -= 1;
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::param(format!("sampling rate {rate} outside (0, 1]")));
    }
    Ok(())
}

/// Builds a mask for `scheme` on an `h × w` grid.
///
/// * Cartesian: whole rows (phase-encode lines) are sampled; a central band
///   of ⌈center_fraction·H⌉ lines is always kept, and random additional lines
///   bring the total to exactly ⌈H/AF⌉.
/// * Radial: golden-angle spokes through the center are rasterized until the
///   rate reaches the target, then samples of the last spoke are dropped at
///   random to land on ⌈rate·H·W⌉ samples.
/// * Spiral: one Archimedean arm `r = aφ` grown from the center, with the arm
///   spacing chosen from the target so the arc spans the grid, trimmed the
///   same way.
pub fn make_mask(
    scheme: Scheme,
    shape: (usize, usize),
    target: Target,
    center_fraction: f64,
    seed: u64,
) -> Result<Mask> {
    let (h, w) = shape;
    if h == 0 || w == 0 {
        return Err(Error::param("mask extents must be positive"));
    }
    let mut rng = Rng::derive(seed, &format!("mask/{scheme}"));
    let grid = match (scheme, target) {
        (Scheme::Full, _) => return Ok(Mask::full(h, w)),
        (Scheme::Cartesian, Target::Acceleration(af)) => {
            cartesian(h, w, af, center_fraction, &mut rng)?
        }
        (Scheme::Radial, Target::Rate(rate)) => {
            check_rate(rate)?;
            radial(h, w, rate, &mut rng)
        }
        (Scheme::Spiral, Target::Rate(rate)) => {
            check_rate(rate)?;
            spiral(h, w, rate, &mut rng)?
        }
        (s, t) => {
            return Err(Error::param(format!("target {t:?} is not valid for a {s} mask")));
        }
    };
    Ok(Mask::from_grid(grid, scheme, target, seed))
}

fn cartesian(h: usize, w: usize, af: f64, center_fraction: f64, rng: &mut Rng) -> Result<RealTensor> {
    if !(af >= 1.0) || af > h as f64 {
        return Err(Error::param(format!(
            "acceleration {af} unreachable with {h} phase-encode lines"
        )));
    }
    if !(0.0..=1.0).contains(&center_fraction) {
        return Err(Error::param(format!("center fraction {center_fraction} outside [0, 1]")));
    }
    let lines = (h as f64 / af).ceil() as usize;
    let band = ((center_fraction * h as f64).ceil() as usize).clamp(1, lines);
    let mut chosen = vec![false; h];
    let start = h / 2 - band / 2;
    for c in start..start + band {
        chosen[unshift(c, h)] = true;
    }
    let mut rest: Vec<usize> = (0..h).filter(|&i| !chosen[i]).collect();
    rng.shuffle(&mut rest);
    for &i in rest.iter().take(lines - band) {
        chosen[i] = true;
    }
    let data = (0..h * w)
        .map(|idx| if chosen[idx / w] { 1.0 } else { 0.0 })
        .collect();
    RealTensor::new(&[h, w], data)
}

fn goal_count(h: usize, w: usize, rate: f64) -> usize {
    ((rate * (h * w) as f64).ceil() as usize).max(1)
}

fn radial(h: usize, w: usize, rate: f64, rng: &mut Rng) -> RealTensor {
    let mut raster = Raster::new(h, w);
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    raster.mark(cy, cx);
    let goal = goal_count(h, w, rate);
    let reach = ((h * h + w * w) as f64).sqrt() / 2.0 + 1.0;
    let mut spoke = 0usize;
    while raster.count < goal {
        let theta = (spoke as f64 * GOLDEN_ANGLE_DEG).to_radians();
        let (s, c) = theta.sin_cos();
        let mut added = Vec::new();
        let steps = (2.0 * reach / 0.5).ceil() as usize;
        for k in 0..=steps {
            let t = -reach + k as f64 * 0.5;
            if let Some(i) = raster.mark(cy + t * s, cx + t * c) {
                added.push(i);
            }
        }
        spoke += 1;
        if raster.count >= goal {
            raster.trim(&mut added, goal, rng);
        }
        if spoke > 100_000 {
            break;
        }
    }
    raster.into_tensor()
}

fn spiral(h: usize, w: usize, rate: f64, rng: &mut Rng) -> Result<RealTensor> {
    let goal = goal_count(h, w, rate);
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let reach = ((h * h + w * w) as f64).sqrt() / 2.0 + 1.0;
    // A rasterized arm with spacing d covers about 1/d of the plane.
    let mut spacing = (1.0 / rate).max(1.0);
    for _ in 0..200 {
        let a = spacing / (2.0 * std::f64::consts::PI);
        let mut raster = Raster::new(h, w);
        raster.mark(cy, cx);
        let mut phi = 0.0f64;
        let mut recent: Vec<usize> = Vec::new();
        while raster.count < goal {
            let r = a * phi;
            if r > reach {
                break;
            }
            if let Some(i) = raster.mark(cy + r * phi.sin(), cx + r * phi.cos()) {
                recent.push(i);
                if recent.len() > 4 * (h + w) {
                    recent.drain(..recent.len() - 2 * (h + w));
                }
            }
            // Arc-length step of a quarter pixel.
            phi += 0.25 / (a * a + r * r).sqrt().max(a);
        }
        if raster.count >= goal {
            raster.trim(&mut recent, goal, rng);
            return Ok(raster.into_tensor());
        }
        spacing *= 0.9;
    }
    Err(Error::param(format!("spiral cannot reach rate {rate} on {h}×{w}")))
}
