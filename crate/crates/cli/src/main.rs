use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bpdg_core::collision::{gamma_integrals, k_matrix_oracle, CollisionMatrix, PhononKernel};
use bpdg_core::driver;
use bpdg_core::kgrid::{build_grid, KGrid};
use bpdg_core::kmatrix_io::{read_kmatrix, write_kmatrix, write_kmatrix_csv};
use bpdg_core::mc_extract::{extract_k_matrix, write_error_report, DtChoice, ExtractOptions};
use bpdg_core::par::Execution;
use bpdg_core::params::{build_scales, load_config, Config};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bp-dg", version, about = "Boltzmann-Poisson DG solver for 1-D silicon diodes")]
struct Cli {
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set device.n_x=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        load_config(&self.config, &self.overrides)
            .with_context(|| format!("loading {}", self.config.display()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum DtArg {
    Auto,
    PerCell,
    Seconds(f64),
}

impl FromStr for DtArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(DtArg::Auto),
            "per-cell" => Ok(DtArg::PerCell),
            _ => s
                .parse::<f64>()
                .map(DtArg::Seconds)
                .map_err(|_| format!("expected `auto`, `per-cell` or a time in seconds, got `{s}`")),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpFormat {
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the device and write moment snapshots and diagnostics.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Collision matrix file; the quadrature matrix is built when omitted.
        #[arg(long)]
        kmatrix: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Build the collision matrix by quadrature.
    OracleK {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the collision matrix by Monte Carlo.
    ExtractK {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Particles per source cell.
        #[arg(long)]
        particles: u64,
        /// Time step in seconds, `auto` (one step from the largest rate in the
        /// k-domain) or `per-cell` (one step per source cell).
        #[arg(long, default_value = "auto")]
        dt: DtArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reference matrix to compare against.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Error report CSV (requires --ref).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the k-grid cell table as CSV.
    DumpGrid {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output file, stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a collision-matrix file to text.
    DumpKmatrix {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: DumpFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn kernel_for(cfg: &Config) -> PhononKernel {
    PhononKernel::silicon(&cfg.material, &build_scales(&cfg.material))
}

fn check_matrix(k: &CollisionMatrix, grid: &KGrid, path: &Path) -> Result<()> {
    if k.len() != grid.len() {
        bail!(
            "{} holds a {}-cell matrix but the grid has {} cells",
            path.display(),
            k.len(),
            grid.len()
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Run { cfg, kmatrix, out } => {
            let cfg = cfg.load()?;
            let grid = build_grid(&cfg)?;
            let k = match &kmatrix {
                Some(p) => {
                    let k = read_kmatrix(p)?;
                    check_matrix(&k, &grid, p)?;
                    k
                }
                None => {
                    eprintln!("building collision matrix for {} cells", grid.len());
                    k_matrix_oracle(&grid, &kernel_for(&cfg), exec)
                }
            };
            let start = Instant::now();
            let summary = driver::run(&cfg, &grid, &k, &out, exec)?;
            eprintln!(
                "{} steps to {} ps in {:.1} s; max negative fraction {:.3}%",
                summary.steps,
                summary.final_time * 1e12,
                start.elapsed().as_secs_f64(),
                summary.max_neg_fraction_pct()
            );
            for p in &summary.snapshots {
                println!("{}", p.display());
            }
        }
        Command::OracleK { cfg, out } => {
            let cfg = cfg.load()?;
            let grid = build_grid(&cfg)?;
            let k = k_matrix_oracle(&grid, &kernel_for(&cfg), exec);
            write_kmatrix(&out, &k)?;
        }
        Command::ExtractK {
            cfg,
            particles,
            dt,
            seed,
            reference,
            out,
            report,
        } => {
            let cfg = cfg.load()?;
            let grid = build_grid(&cfg)?;
            let kernel = kernel_for(&cfg);
            if report.is_some() && reference.is_none() {
                bail!("--report needs --ref");
            }
            let reference = match &reference {
                Some(p) => {
                    let k = read_kmatrix(p)?;
                    check_matrix(&k, &grid, p)?;
                    Some(k)
                }
                None => None,
            };
            let gamma = match &reference {
                Some(r) => r.gamma_int.clone(),
                None => gamma_integrals(&grid, &kernel, exec),
            };
            let opts = ExtractOptions {
                n_particles: particles,
                dt: match dt {
                    DtArg::Auto => DtChoice::Auto,
                    DtArg::PerCell => DtChoice::PerCell,
                    DtArg::Seconds(s) => DtChoice::Seconds(s),
                },
                seed,
                exec,
            };
            let rep = extract_k_matrix(&grid, &kernel, &gamma, &opts, reference.as_ref())?;
            write_kmatrix(&out, &rep.k_mc)?;
            if let Some(p) = report {
                let mut w = output(Some(&p))?;
                write_error_report(&[&rep], &mut w)?;
                w.flush()?;
            }
            if let Some(e) = rep.errors {
                eprintln!(
                    "max error {:.5e}, mean error {:.5e} (relative to max entry)",
                    e.max_rel, e.mean_rel
                );
            }
            if rep.stats.rejected_escapes > 0 {
                eprintln!("{} scatterings left the k-domain and were rejected", rep.stats.rejected_escapes);
            }
        }
        Command::DumpGrid { cfg, out } => {
            let cfg = cfg.load()?;
            let grid = build_grid(&cfg)?;
            let mut w = output(out.as_deref())?;
            grid.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::DumpKmatrix { input, format, out } => {
            let k = read_kmatrix(&input)?;
            let mut w = output(out.as_deref())?;
            match format {
                DumpFormat::Csv => write_kmatrix_csv(&k, &mut w)?,
            }
            w.flush()?;
        }
    }
    Ok(())
}
