use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::classical::{dict_reconstruct, tv_reconstruct, DictConfig};
use crate::error::{Error, Result};
use crate::kspace::{forward, make_mask, zero_fill, Mask, Scheme, Target};
use crate::losses::FeatureExtractor;
use crate::metrics::{CellResult, MetricsReport};
use crate::models::{build, Batch, Family};
use crate::rng::derive_seed;
use crate::tensor::io::save_pgm;
use crate::tensor::RealTensor;
use crate::trainer::{infer, score_cell, Trainer};

use super::config::{ExperimentConfig, Method};
use super::data::{load_dataset, stacks, Dataset};
use super::table::format_table;

/// `|rec − gt| / vmax`, clipped to `[0, 1]`.
pub fn error_map(rec: &RealTensor, gt: &RealTensor, vmax: f64) -> Result<RealTensor> {
    if !(vmax > 0.0) {
        return Err(Error::param(format!("error map vmax must be positive, got {vmax}")));
    }
    rec.zip_map(gt, |a, b| ((a - b).abs() / vmax).min(1.0))
}

/// Writes [`error_map`] as a PGM: 0 is black, `vmax` and above white.
pub fn save_error_map(path: impl AsRef<Path>, rec: &RealTensor, gt: &RealTensor, vmax: f64) -> Result<()> {
    save_pgm(path, &error_map(rec, gt, vmax)?, 0.0, 1.0)
}

/// Directory-safe name of a mask cell, e.g. `radial_30pct`.
pub fn cell_dir_name(scheme: Scheme, target: Target) -> String {
    format!("{scheme}_{}", target.label().replace('%', "pct").to_lowercase())
}

#[derive(Debug, Clone)]
pub struct GridOutput {
    pub report: MetricsReport,
    pub table: String,
    pub out_dir: PathBuf,
}

struct MaskCell {
    scheme: Scheme,
    target: Target,
    mask: Mask,
    dir: PathBuf,
}

impl MaskCell {
    fn labels(&self, method: &str) -> (String, String, String) {
        (self.scheme.to_string(), self.target.label(), method.to_string())
    }
}

/// One schedulable piece of work: a classical method or a network family.
#[derive(Debug, Clone, Copy)]
enum Unit {
    Classical(Method),
    Learned(Family),
}

struct Prepared<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a Dataset,
    test: Vec<RealTensor>,
}

/// Runs every (mask, target, method) cell of `cfg` and writes, under `out`:
/// `masks/`, `ground_truth/`, one directory per cell with `metrics.csv`,
/// reconstructions and error maps (plus `losses.csv` for learned methods),
/// and the merged `table.csv` / `table.txt`. A failing cell is logged and
/// reported as failed; the others still run. Output depends only on the
/// config, never on `jobs`.
pub fn run_grid(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<GridOutput> {
    cfg.validate()?;
    let data = load_dataset(&cfg.dataset, cfg.seed)?;
    let (h, w) = data.shape()?;
    if cfg.methods.contains(&Method::Kigan) {
        if let Some(v) = data.train.iter().chain(&data.test).find(|v| v.slices.len() < 3) {
            return Err(Error::Config(format!(
                "KIGAN needs at least 3 slices per volume; {} has {}",
                v.subject,
                v.slices.len()
            )));
        }
    }
    fs::create_dir_all(out.join("masks"))?;
    fs::create_dir_all(out.join("ground_truth"))?;

    let test: Vec<RealTensor> = data.test.iter().flat_map(|v| v.magnitudes()).collect();
    for (i, x) in test.iter().enumerate() {
        save_pgm(out.join("ground_truth").join(format!("{i:03}.pgm")), x, 0.0, 1.0)?;
    }

    let mut cells = Vec::new();
    for m in &cfg.masks {
        for target in m.targets() {
            let name = cell_dir_name(m.scheme, target);
            let mask = make_mask(
                m.scheme,
                (h, w),
                target,
                m.center_fraction(),
                derive_seed(cfg.seed, &format!("mask/{name}")),
            )?;
            mask.save_pgm(out.join("masks").join(format!("{name}.pgm")))?;
            cells.push(MaskCell {
                scheme: m.scheme,
                target,
                mask,
                dir: out.join(&name),
            });
        }
    }

    let mut units = Vec::new();
    for m in Method::ALL.into_iter().filter(|m| cfg.methods.contains(m)) {
        match m.family() {
            None => units.push(Unit::Classical(m)),
            Some(f) if !units.iter().any(|u| matches!(u, Unit::Learned(g) if *g == f)) => units.push(Unit::Learned(f)),
            Some(_) => {}
        }
    }
    let work: Vec<(usize, Unit)> = (0..cells.len()).flat_map(|c| units.iter().map(move |u| (c, *u))).collect();

    let prep = Prepared { cfg, data: &data, test };
    let results: Mutex<Vec<Option<Vec<CellResult>>>> = Mutex::new(vec![None; work.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, work.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(c, unit)) = work.get(i) else { break };
                let r = run_unit(&prep, &cells[c], unit);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });

    let results = results.into_inner().unwrap_or_else(|e| e.into_inner());
    let mut report = MetricsReport::default();
    for (ci, _) in cells.iter().enumerate() {
        let mut here: Vec<CellResult> = work
            .iter()
            .zip(&results)
            .filter(|((c, _), _)| *c == ci)
            .flat_map(|(_, r)| r.clone().unwrap_or_default())
            .collect();
        here.sort_by_key(|r| Method::from_key(&r.method));
        report.cells.extend(here);
    }
    let table = format_table(&report.rows());
    fs::write(out.join("table.csv"), report.to_csv())?;
    fs::write(out.join("table.txt"), &table)?;
    Ok(GridOutput {
        report,
        table,
        out_dir: out.to_path_buf(),
    })
}

fn run_unit(p: &Prepared, cell: &MaskCell, unit: Unit) -> Vec<CellResult> {
    let methods: Vec<Method> = match unit {
        Unit::Classical(m) => vec![m],
        Unit::Learned(f) => Method::ALL
            .into_iter()
            .filter(|m| m.family() == Some(f) && p.cfg.methods.contains(m))
            .collect(),
    };
    let started = std::time::Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| match unit {
        Unit::Classical(m) => classical_cell(p, cell, m),
        Unit::Learned(f) => learned_cell(p, cell, f),
    }))
    .unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(Error::Contract(format!("cell panicked: {msg}")))
    });
    log::info!(
        "{} {} {unit:?}: {:.1}s",
        cell.scheme,
        cell.target.label(),
        started.elapsed().as_secs_f64()
    );
    match outcome {
        Ok(cells) => cells.into_iter().filter(|c| methods.iter().any(|m| m.key() == c.method)).collect(),
        Err(e) => {
            let (mask, target, _) = cell.labels("");
            log::error!("{mask} {target} {unit:?} failed: {e}");
            methods
                .iter()
                .map(|m| CellResult::failed(&mask, &target, m.key(), e.to_string()))
                .collect()
        }
    }
}

fn cell_seed(p: &Prepared, cell: &MaskCell, what: &str) -> u64 {
    derive_seed(p.cfg.seed, &format!("cell/{}/{what}", cell_dir_name(cell.scheme, cell.target)))
}

/// Scores N×1×H×W reconstructions and writes the cell's artifacts.
fn finish(p: &Prepared, cell: &MaskCell, method: &str, recon: &RealTensor) -> Result<CellResult> {
    let (h, w) = cell.mask.shape();
    let truth = stack(&p.test, h, w)?;
    let fx = p
        .cfg
        .fid
        .then(|| FeatureExtractor::random_conv(1, derive_seed(p.cfg.seed, "fid")));
    let (mask, target, method) = cell.labels(method);
    let result = score_cell((&mask, &target, &method), recon, &truth, fx.as_ref())?;

    let dir = cell.dir.join(&method);
    fs::create_dir_all(&dir)?;
    let mut csv = String::from("image,psnr,ssim,rmse\n");
    for (i, s) in result.images.iter().enumerate() {
        csv.push_str(&format!("{i},{:.6},{:.6},{:.6}\n", s.psnr, s.ssim, s.rmse));
    }
    fs::write(dir.join("metrics.csv"), csv)?;
    for (i, gt) in p.test.iter().enumerate() {
        let rec = recon.slice_axis(0, i, 1)?.reshape(&[h, w])?;
        save_pgm(dir.join(format!("recon_{i:03}.pgm")), &rec, 0.0, 1.0)?;
        save_error_map(dir.join(format!("error_{i:03}.pgm")), &rec, gt, p.cfg.error_vmax)?;
    }
    Ok(result)
}

fn stack(images: &[RealTensor], h: usize, w: usize) -> Result<RealTensor> {
    let data = images.iter().flat_map(|x| x.data().iter().copied()).collect();
    RealTensor::new(&[images.len(), 1, h, w], data)
}

fn classical_cell(p: &Prepared, cell: &MaskCell, method: Method) -> Result<Vec<CellResult>> {
    let (h, w) = cell.mask.shape();
    let dict = DictConfig {
        seed: cell_seed(p, cell, "dict"),
        ..p.cfg.dict
    };
    let recons = p
        .test
        .iter()
        .map(|x| {
            let y_u = forward(&x.to_complex(), &cell.mask)?;
            match method {
                Method::Zf => Ok(zero_fill(&y_u)?.abs()),
                Method::Tv => Ok(tv_reconstruct(&y_u, &cell.mask, &p.cfg.tv)?.image),
                Method::Dict => dict_reconstruct(&y_u, &cell.mask, &dict),
                other => Err(Error::Contract(format!("{other} is not a classical method"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![finish(p, cell, method.key(), &stack(&recons, h, w)?)?])
}

fn batch_for(family: Family, volumes: &[super::data::Volume], mask: &Mask) -> Result<Batch> {
    if family == Family::Kigan {
        let all: Vec<[RealTensor; 3]> = volumes.iter().flat_map(stacks).collect();
        let refs: Vec<[&RealTensor; 3]> = all.iter().map(|[a, b, c]| [a, b, c]).collect();
        Batch::from_stacks(&refs, mask)
    } else {
        let all: Vec<RealTensor> = volumes.iter().flat_map(|v| v.magnitudes()).collect();
        Batch::from_images(&all, mask)
    }
}

fn learned_cell(p: &Prepared, cell: &MaskCell, family: Family) -> Result<Vec<CellResult>> {
    let (h, w) = cell.mask.shape();
    if h != w {
        return Err(Error::Input(format!("networks need square images, got {h}×{w}")));
    }
    let spec = p.cfg.model_spec(family, h)?;
    let mut tc = p.cfg.train_config(family)?;
    tc.seed = cell_seed(p, cell, &format!("{family}/train"));
    let gan = build(&spec, cell_seed(p, cell, &format!("{family}/init")))?;
    let train = batch_for(family, &p.data.train, &cell.mask)?;
    let test = batch_for(family, &p.data.test, &cell.mask)?;

    let dir = cell.dir.join(family.to_string());
    fs::create_dir_all(&dir)?;
    let mut trainer = Trainer::new(gan, tc)?;
    trainer.run(&train, None, Some(&dir))?;
    infer(&mut trainer.gan, &test)?
        .into_iter()
        .map(|(method, recon)| finish(p, cell, method, &recon))
        .collect()
}
