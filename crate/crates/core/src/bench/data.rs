use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::phantom_volume;
use crate::rng::Rng;
use crate::tensor::io::{load_gray, read_mbt, AnyTensor};
use crate::tensor::{ComplexTensor, RealTensor};

use super::config::DatasetConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Anatomy {
    Brain,
    Knee,
    Phantom,
    #[default]
    Other,
}

impl fmt::Display for Anatomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Anatomy::Brain => "brain",
            Anatomy::Knee => "knee",
            Anatomy::Phantom => "phantom",
            Anatomy::Other => "other",
        })
    }
}

/// Ordered, same-shaped slices of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub slices: Vec<ComplexTensor>,
    pub subject: String,
    pub anatomy: Anatomy,
}

impl Volume {
    pub fn new(slices: Vec<ComplexTensor>, subject: impl Into<String>, anatomy: Anatomy) -> Result<Self> {
        let first = slices.first().ok_or_else(|| Error::Ingest("volume has no slices".into()))?;
        first.dims2()?;
        if let Some(s) = slices.iter().find(|s| s.shape() != first.shape()) {
            return Err(Error::Ingest(format!(
                "slice shapes differ: {:?} and {:?}",
                first.shape(),
                s.shape()
            )));
        }
        Ok(Self {
            slices,
            subject: subject.into(),
            anatomy,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        let s = self.slices[0].shape();
        (s[0], s[1])
    }

    pub fn magnitudes(&self) -> Vec<RealTensor> {
        self.slices.iter().map(|s| s.abs()).collect()
    }
}

/// (previous, centre, next) magnitude triples; the ends repeat the edge slice.
pub fn stacks(volume: &Volume) -> Vec<[RealTensor; 3]> {
    let mags = volume.magnitudes();
    let last = mags.len() - 1;
    (0..=last)
        .map(|l| [mags[l.saturating_sub(1)].clone(), mags[l].clone(), mags[(l + 1).min(last)].clone()])
        .collect()
}

fn is_pgm(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn read_slices(path: &Path) -> Result<Vec<(PathBuf, ComplexTensor)>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| is_pgm(p));
        files.sort();
        if files.is_empty() {
            return Err(Error::Ingest(format!("{}: no PGM slices", path.display())));
        }
        return files
            .into_iter()
            .map(|f| Ok((f.clone(), load_gray(&f)?.to_complex())))
            .collect();
    }
    if is_pgm(path) {
        return Ok(vec![(path.to_path_buf(), load_gray(path)?.to_complex())]);
    }
    let t = read_mbt(path).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    let t = match t {
        AnyTensor::Real(r) => r.to_complex(),
        AnyTensor::Complex(c) => c,
    };
    match *t.shape() {
        [_, _] => Ok(vec![(path.to_path_buf(), t)]),
        [s, h, w] => (0..s)
            .map(|i| Ok((path.to_path_buf(), t.slice_axis(0, i, 1)?.reshape(&[h, w])?)))
            .collect(),
        _ => Err(Error::Ingest(format!(
            "{}: expected a 2-D image or a slices×H×W stack, got shape {:?}",
            path.display(),
            t.shape()
        ))),
    }
}

/// Reads one volume from MBT1 files (2-D slices or slices×H×W stacks),
/// PGM files, or directories of PGM slices, in the order given.
/// Magnitudes are scaled so the volume maximum is 1; real inputs get zero
/// phase.
pub fn ingest(paths: &[PathBuf]) -> Result<Volume> {
    let mut slices = Vec::new();
    for p in paths {
        slices.extend(read_slices(p)?);
    }
    let (_, first) = slices.first().ok_or_else(|| Error::Ingest("no input files".into()))?;
    let shape = first.shape().to_vec();
    let mut offending: Vec<String> = slices
        .iter()
        .filter(|(_, s)| s.shape() != shape.as_slice())
        .map(|(p, s)| format!("{} {:?}", p.display(), s.shape()))
        .collect();
    if !offending.is_empty() {
        offending.dedup();
        return Err(Error::Ingest(format!(
            "slices do not match the first slice's shape {shape:?}: {}",
            offending.join(", ")
        )));
    }
    let peak = slices.iter().map(|(_, s)| s.abs().max()).fold(0.0, f64::max);
    let slices: Vec<ComplexTensor> = slices
        .into_iter()
        .map(|(_, s)| if peak > 0.0 { s.map(|v| v / peak) } else { s })
        .collect();
    let subject = paths
        .first()
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Volume::new(slices, subject, Anatomy::Other)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Volume>,
    pub test: Vec<Volume>,
}

impl Dataset {
    /// Common slice shape of every volume.
    pub fn shape(&self) -> Result<(usize, usize)> {
        let mut all = self.train.iter().chain(&self.test);
        let first = all.next().ok_or_else(|| Error::Ingest("empty dataset".into()))?;
        let shape = first.shape();
        let offending: Vec<String> = self
            .train
            .iter()
            .chain(&self.test)
            .filter(|v| v.shape() != shape)
            .map(|v| format!("{} {:?}", v.subject, v.shape()))
            .collect();
        if !offending.is_empty() {
            return Err(Error::Ingest(format!(
                "volumes do not match {shape:?}: {}",
                offending.join(", ")
            )));
        }
        Ok(shape)
    }
}

fn phantom_subjects(size: usize, slices: usize, subjects: usize, split: &str, seed: u64) -> Result<Vec<Volume>> {
    (0..subjects)
        .map(|s| {
            let mut rng = Rng::derive(seed, &format!("phantom/{split}/{s}"));
            let mags = phantom_volume(size, size, slices, &mut rng);
            Volume::new(
                mags.iter().map(|m| m.to_complex()).collect(),
                format!("{split}{s:02}"),
                Anatomy::Phantom,
            )
        })
        .collect()
}

pub fn load_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    let ds = match cfg {
        DatasetConfig::Phantom(p) => Dataset {
            train: phantom_subjects(p.size, p.slices, p.train_subjects, "train", seed)?,
            test: phantom_subjects(p.size, p.slices, p.test_subjects, "test", seed)?,
        },
        DatasetConfig::Files(f) => {
            let load = |paths: &[PathBuf]| -> Result<Vec<Volume>> {
                paths
                    .iter()
                    .map(|p| {
                        let mut v = ingest(std::slice::from_ref(p))?;
                        v.anatomy = f.anatomy;
                        Ok(v)
                    })
                    .collect()
            };
            Dataset {
                train: load(&f.train)?,
                test: load(&f.test)?,
            }
        }
    };
    ds.shape()?;
    Ok(ds)
}
