use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ganrecon::bench::{run_grid, ExperimentConfig};
use ganrecon::kspace::{make_mask, Scheme, Target, DEFAULT_CENTER_FRACTION};
use ganrecon::metrics::{psnr, rmse, ssim_with_range};
use ganrecon::tensor::io::{load_gray, read_mbt};
use ganrecon::RealTensor;

#[derive(Parser)]
#[command(name = "bench", version, about = "GAN and compressed-sensing MRI reconstruction benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mask × method grid and write tables, images and error maps.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for independent cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Generate a sampling mask (PGM with DC at the centre, or MBT1).
    Mask {
        #[arg(long)]
        scheme: Scheme,
        /// Sampling rate for radial and spiral masks.
        #[arg(long)]
        rate: Option<f64>,
        /// Acceleration factor for Cartesian masks.
        #[arg(long)]
        af: Option<f64>,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = DEFAULT_CENTER_FRACTION)]
        center_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR, SSIM and RMSE of a reconstruction against ground truth.
    Metrics {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        data_range: f64,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, out, seed, jobs } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = match out.or_else(|| cfg.output.clone()) {
                Some(o) => o,
                None => bail!("no output directory: pass --out or set `output` in the config"),
            };
            log::info!("{} cells -> {}", cfg.cell_count(), out.display());
            let res = run_grid(&cfg, &out, jobs)?;
            print!("{}", res.table);
            let failed = res.report.cells.iter().filter(|c| c.failure.is_some()).count();
            if failed > 0 {
                log::warn!("{failed} cell(s) failed; see the log above");
            }
        }
        Command::Mask {
            scheme,
            rate,
            af,
            size,
            center_fraction,
            seed,
            out,
        } => {
            let target = match (scheme, rate, af) {
                (Scheme::Full, None, None) => Target::Full,
                (Scheme::Cartesian, None, Some(af)) => Target::Acceleration(af),
                (Scheme::Radial | Scheme::Spiral, Some(r), None) => Target::Rate(r),
                (Scheme::Cartesian, _, _) => bail!("cartesian masks take --af only"),
                (Scheme::Full, _, _) => bail!("the full mask takes neither --rate nor --af"),
                _ => bail!("{scheme} masks take --rate only"),
            };
            let mask = make_mask(scheme, (size, size), target, center_fraction, seed)?;
            if out.extension().is_some_and(|e| e == "mbt") {
                mask.save_mbt(&out)?;
            } else {
                mask.save_pgm(&out)?;
            }
            println!(
                "{scheme} {} {size}x{size}: {} samples, rate {:.4}",
                target.label(),
                mask.count(),
                mask.achieved_rate
            );
        }
        Command::Metrics { rec, gt, data_range } => {
            let rec = load_image(&rec)?;
            let gt = load_image(&gt)?;
            println!("PSNR {:.4}", psnr(&rec, &gt, data_range)?);
            println!("SSIM {:.4}", ssim_with_range(&rec, &gt, data_range)?);
            println!("RMSE {:.6}", rmse(&rec, &gt)?);
        }
    }
    Ok(())
}

/// MBT1 tensors are reduced to magnitude; anything else is read as grayscale.
fn load_image(path: &Path) -> Result<RealTensor> {
    let t = if path.extension().is_some_and(|e| e == "mbt") {
        read_mbt(path)?.into_magnitude()
    } else {
        load_gray(path)?
    };
    t.dims2().with_context(|| format!("{} is not a 2-D image", path.display()))?;
    Ok(t)
}
