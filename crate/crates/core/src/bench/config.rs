use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classical::{DictConfig, TvConfig};
use crate::error::{Error, Result};
use crate::kspace::{Scheme, Target, DEFAULT_CENTER_FRACTION};
use crate::models::{Family, ModelSpec};
use crate::trainer::TrainConfig;

use super::data::Anatomy;

pub const DEFAULT_ERROR_VMAX: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Zf,
    Tv,
    Dict,
    Dagan,
    Kigan,
    Recon,
    Refine,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Zf,
        Method::Tv,
        Method::Dict,
        Method::Dagan,
        Method::Kigan,
        Method::Recon,
        Method::Refine,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Method::Zf => "zf",
            Method::Tv => "tv",
            Method::Dict => "dict",
            Method::Dagan => "dagan",
            Method::Kigan => "kigan",
            Method::Recon => "recon",
            Method::Refine => "refine",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.key() == key)
    }

    /// The network family that produces this output, if it is learned.
    pub fn family(self) -> Option<Family> {
        match self {
            Method::Dagan => Some(Family::Dagan),
            Method::Kigan => Some(Family::Kigan),
            Method::Recon | Method::Refine => Some(Family::ReconRefine),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Shepp-Logan style subjects; each subject is one jittered volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomDataset {
    pub size: usize,
    pub slices: usize,
    pub train_subjects: usize,
    pub test_subjects: usize,
}

impl Default for PhantomDataset {
    fn default() -> Self {
        Self {
            size: 64,
            slices: 5,
            train_subjects: 4,
            test_subjects: 1,
        }
    }
}

/// Volumes on disk: MBT1 files (2-D or slices×H×W) or directories of PGM slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesDataset {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    #[serde(default)]
    pub anatomy: Anatomy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    Phantom(PhantomDataset),
    Files(FilesDataset),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Phantom(PhantomDataset::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskConfig {
    pub scheme: Scheme,
    /// Acceleration factors for Cartesian masks, sampling rates otherwise.
    /// Ignored for the full mask.
    #[serde(default)]
    pub targets: Vec<f64>,
    #[serde(default)]
    pub center_fraction: Option<f64>,
}

impl MaskConfig {
    pub fn targets(&self) -> Vec<Target> {
        if self.scheme == Scheme::Full {
            return vec![Target::Full];
        }
        self.targets.iter().map(|&v| Target::for_scheme(self.scheme, v)).collect()
    }

    pub fn center_fraction(&self) -> f64 {
        self.center_fraction.unwrap_or(DEFAULT_CENTER_FRACTION)
    }
}

/// Architecture overrides and training settings for one network family.
/// `train` holds any [`TrainConfig`] keys; unset keys take the family's
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnedSection {
    pub depth: Option<usize>,
    pub base_channels: Option<usize>,
    #[serde(default)]
    pub train: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Where `run` writes when no directory is given on the command line.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    pub masks: Vec<MaskConfig>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub tv: TvConfig,
    #[serde(default)]
    pub dict: DictConfig,
    #[serde(default)]
    pub dagan: LearnedSection,
    #[serde(default)]
    pub kigan: LearnedSection,
    #[serde(default)]
    pub recon_refine: LearnedSection,
    /// Absolute error rendered white in the error maps.
    #[serde(default = "default_vmax")]
    pub error_vmax: f64,
    /// Also report FID (fixed random-feature embedder) per cell.
    #[serde(default)]
    pub fid: bool,
}

fn default_vmax() -> f64 {
    DEFAULT_ERROR_VMAX
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset paths are taken relative to it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let DatasetConfig::Files(files) = &mut cfg.dataset {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in files.train.iter_mut().chain(files.test.iter_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.masks.is_empty() || self.masks.iter().all(|m| m.targets().is_empty()) {
            return bad("at least one mask cell is required".into());
        }
        for m in &self.masks {
            if m.scheme != Scheme::Full && m.targets.is_empty() {
                return bad(format!("{} mask lists no targets", m.scheme));
            }
            let cf = m.center_fraction();
            if !(0.0..=1.0).contains(&cf) {
                return bad(format!("center_fraction {cf} is outside [0, 1]"));
            }
        }
        let mut seen = Vec::new();
        for m in &self.methods {
            if seen.contains(m) {
                return bad(format!("method {m} is listed twice"));
            }
            seen.push(*m);
        }
        if !(self.error_vmax > 0.0) {
            return bad(format!("error_vmax must be positive, got {}", self.error_vmax));
        }
        self.tv.validate().map_err(|e| Error::Config(e.to_string()))?;
        match &self.dataset {
            DatasetConfig::Phantom(p) => {
                if p.size == 0 || p.slices == 0 || p.train_subjects == 0 || p.test_subjects == 0 {
                    return bad(format!("phantom dataset sizes must be positive: {p:?}"));
                }
                if self.methods.contains(&Method::Kigan) && p.slices < 3 {
                    return bad("KIGAN needs volumes of at least 3 slices".into());
                }
            }
            DatasetConfig::Files(f) => {
                if f.train.is_empty() && self.learned_families().next().is_some() {
                    return bad("learned methods need training volumes".into());
                }
                if f.test.is_empty() {
                    return bad("no test volumes".into());
                }
                if let Some(p) = f.train.iter().chain(&f.test).find(|p| !p.exists()) {
                    return bad(format!("{} does not exist", p.display()));
                }
            }
        }
        for family in [Family::Dagan, Family::Kigan, Family::ReconRefine] {
            let s = self.section(family);
            if s.depth == Some(0) || s.base_channels == Some(0) {
                return bad(format!("[{family}] depth and base_channels must be positive"));
            }
            self.train_config(family)?;
        }
        Ok(())
    }

    /// Number of (mask, target, method) cells in the table.
    pub fn cell_count(&self) -> usize {
        self.masks.iter().map(|m| m.targets().len()).sum::<usize>() * self.methods.len()
    }

    /// Families that must be trained, in method order, without repeats.
    pub fn learned_families(&self) -> impl Iterator<Item = Family> + '_ {
        let mut seen = Vec::new();
        Method::ALL
            .into_iter()
            .filter(|m| self.methods.contains(m))
            .filter_map(|m| m.family())
            .filter(move |f| {
                let new = !seen.contains(f);
                seen.push(*f);
                new
            })
    }

    pub fn section(&self, family: Family) -> &LearnedSection {
        match family {
            Family::Dagan => &self.dagan,
            Family::Kigan => &self.kigan,
            Family::ReconRefine => &self.recon_refine,
        }
    }

    /// The family's test-scale architecture at `image_size`, with overrides.
    pub fn model_spec(&self, family: Family, image_size: usize) -> Result<ModelSpec> {
        let s = self.section(family);
        let base = ModelSpec::test_scale(family);
        let spec = ModelSpec {
            family,
            depth: s.depth.unwrap_or(base.depth),
            base_channels: s.base_channels.unwrap_or(base.base_channels),
            image_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Family defaults overlaid with the keys of the family's `train` table.
    pub fn train_config(&self, family: Family) -> Result<TrainConfig> {
        let err = |e: String| Error::Config(format!("[{family}.train] {e}"));
        let base = TrainConfig::for_family(family);
        let mut table = toml::Table::try_from(&base).map_err(|e| err(e.to_string()))?;
        for (k, v) in &self.section(family).train {
            match (table.get_mut(k), v) {
                (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => {
                    dst.extend(src.iter().map(|(a, b)| (a.clone(), b.clone())));
                }
                _ => {
                    table.insert(k.clone(), v.clone());
                }
            }
        }
        let cfg: TrainConfig = table.try_into().map_err(|e: toml::de::Error| err(e.to_string()))?;
        if cfg.family != family {
            return Err(err(format!("family is fixed to {family}")));
        }
        if cfg.early_stopping.is_some() {
            return Err(err("early stopping needs a validation split, which grid runs do not hold out".into()));
        }
        cfg.validate().map_err(|e| err(e.to_string()))?;
        Ok(cfg)
    }
}
