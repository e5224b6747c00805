//! `fitsolve`: frequency-domain solves, sweeps, cavity eigenvalues and
//! operator statistics for JSON scenes. Results go to CSV.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fit_core::krylov::{Method, SolverConfig, DEFAULT_MAX_ITER, DEFAULT_RESTART, DEFAULT_TOL};
use fit_core::materials::{build_diagonals, scale_curl, MaterialDiagonals};
use fit_core::operator::{assemble_sparse_a, OperatorSetup, ShellOperator, Variant};
use fit_core::oracle::{dense_assemble_with_guard, split_zero_eigenvalues};
use fit_core::results::write_results;
use fit_core::scene::{parse_scene, Model};
use fit_core::sweep::{run_sweep, Excitation, ParallelMode, SweepConfig};
use fit_core::topology::{build_curl, SparseOperator};
use fit_core::Complex64;
use serde::Serialize;

/// Environment variable that overrides `--workers`.
const WORKERS_ENV: &str = "FIT_WORKERS";

#[derive(Parser)]
#[command(name = "fitsolve", version, about = "Matrix-free frequency-domain FIT solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Network parameters at one frequency.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Frequency in Hz.
        #[arg(long)]
        freq: f64,
    },
    /// Network parameters over an equidistant frequency range.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Lowest frequency in Hz (default: scene sweep settings).
        #[arg(long)]
        fmin: Option<f64>,
        /// Highest frequency in Hz.
        #[arg(long)]
        fmax: Option<f64>,
        /// Number of samples.
        #[arg(long)]
        nf: Option<usize>,
    },
    /// Lowest resonances from the dense reference matrix (small grids only).
    Eig {
        #[command(flatten)]
        io: SceneIo,
        /// Number of nonzero eigenvalues to report.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Refuse grids with more edges than this.
        #[arg(long, default_value_t = 4000)]
        max_edges: usize,
    },
    /// Memory and multiplication counts of the operator variants.
    Stats {
        #[command(flatten)]
        io: SceneIo,
        /// One variant; all three when omitted.
        #[arg(long)]
        variant: Option<Variant>,
        /// Frequency in Hz for conductive scenes (default: scene sweep start).
        #[arg(long)]
        freq: Option<f64>,
    },
}

#[derive(Args)]
struct SceneIo {
    /// Scene file (JSON).
    scene: PathBuf,
    /// CSV output path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write the system matrix in Matrix Market format.
    #[arg(long, value_name = "PATH")]
    export_matrix: Option<PathBuf>,
    /// No progress or diagnostics on stderr.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    io: SceneIo,
    /// Krylov method: cg, bcgs, cr, gmres or cgs.
    #[arg(long, default_value = "cg")]
    solver: Method,
    /// Operator variant: e2s, e2t or e2tt.
    #[arg(long, default_value = "e2tt")]
    variant: Variant,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// GMRES restart length.
    #[arg(long, default_value_t = DEFAULT_RESTART)]
    restart: usize,
    /// Worker threads (overridden by FIT_WORKERS).
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Parallelize inside each solve or across independent solves.
    #[arg(long, default_value = "in-solve")]
    mode: ParallelMode,
    /// Drive all ports at once and report port voltages instead of Z and S.
    #[arg(long)]
    superposed: bool,
}

impl Common {
    fn sweep_config(&self, f_min: f64, f_max: f64, n_f: usize) -> Result<SweepConfig> {
        let mut cfg = SweepConfig::new(f_min, f_max, n_f);
        cfg.solver = SolverConfig {
            method: self.solver,
            tol: self.tol,
            max_iter: self.max_iter,
            restart: self.restart,
            // naming the method explicitly is the opt-in
            allow_cgs: self.solver == Method::Cgs,
        };
        cfg.variant = self.variant;
        cfg.workers = workers(self.workers, self.io.quiet)?;
        cfg.mode = self.mode;
        cfg.excitation = if self.superposed {
            Excitation::Superposed
        } else {
            Excitation::PerPort
        };
        cfg.progress = !self.io.quiet;
        Ok(cfg)
    }
}

fn workers(flag: usize, quiet: bool) -> Result<usize> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{WORKERS_ENV}={v:?} is not a worker count"))?;
            if n != flag && !quiet {
                eprintln!("{WORKERS_ENV}={n} overrides --workers {flag}");
            }
            n
        }
        Err(_) => flag,
    };
    if n == 0 {
        bail!("worker count must be at least 1");
    }
    Ok(n)
}

fn load(io: &SceneIo) -> Result<Model> {
    let model = parse_scene(&io.scene)?
        .compile()
        .with_context(|| format!("in {}", io.scene.display()))?;
    if !io.quiet {
        let g = &model.grid;
        eprintln!(
            "{}: {:?} cells, {} edges, {} unknowns, {} port(s)",
            io.scene.display(),
            g.cells(),
            g.n_edges(),
            model.n_unknowns(),
            model.ports.len()
        );
        for line in model.snap.lines() {
            eprintln!("  {line}");
        }
    }
    Ok(model)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot write {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Writes `A = 𝒜ᵀ𝒜` at the given frequency (only matters for conductive
/// scenes) with masked rows and columns zero.
fn export_matrix(model: &Model, omega: Option<f64>, path: &Path) -> Result<()> {
    let diag = build_diagonals(&model.grid, &model.materials, &model.walls, omega)?;
    let file = BufWriter::new(File::create(path).with_context(|| format!("cannot write {}", path.display()))?);
    fn write<S: fit_core::scalar::Scalar>(diag: &MaterialDiagonals, model: &Model, w: impl Write) -> Result<()> {
        let (scaled, _): (SparseOperator<S>, _) = scale_curl(build_curl(&model.grid), diag);
        assemble_sparse_a(&scaled).write_matrix_market(w)?;
        Ok(())
    }
    if diag.is_real() {
        write::<f64>(&diag, model, file)
    } else {
        write::<Complex64>(&diag, model, file)
    }
}

fn run_network(common: &Common, f_min: f64, f_max: f64, n_f: usize) -> Result<bool> {
    let model = load(&common.io)?;
    model.require_ports()?;
    if let Some(path) = &common.io.export_matrix {
        export_matrix(&model, Some(2.0 * std::f64::consts::PI * f_min), path)?;
    }
    let cfg = common.sweep_config(f_min, f_max, n_f)?;
    let res = run_sweep(&model, &cfg)?;
    match &common.io.output {
        Some(p) => write_results(&res.table, p)?,
        None => res.table.write_to(io::stdout().lock())?,
    }
    if !common.io.quiet {
        eprintln!(
            "{} solve(s), {} iterations, {} operator applies, {} model mults",
            res.network.len() * if common.superposed { 1 } else { model.ports.len() },
            res.total_iterations,
            res.total_applies,
            res.total_mults
        );
    }
    Ok(res.all_converged)
}

#[derive(Serialize)]
struct EigRow {
    index: usize,
    omega2: f64,
    freq_hz: f64,
}

fn run_eig(io: &SceneIo, count: usize, max_edges: usize) -> Result<bool> {
    let model = load(io)?;
    if model.materials.is_conductive() {
        bail!("eigenvalues need a scene without conductivity");
    }
    if let Some(path) = &io.export_matrix {
        export_matrix(&model, None, path)?;
    }
    let diag = build_diagonals(&model.grid, &model.materials, &model.walls, None)?;
    if !diag.is_real() {
        bail!("eigenvalues need a lossless scene");
    }
    let dense = dense_assemble_with_guard(&model.grid, &diag, max_edges)?;
    let (zeros, modes) = split_zero_eigenvalues(&dense.eigenvalues(), 1e-9);
    if !io.quiet {
        eprintln!("{zeros} static (zero) eigenvalue(s)");
    }
    let mut w = csv::Writer::from_writer(output(&io.output)?);
    for (index, &omega2) in modes.iter().take(count).enumerate() {
        w.serialize(EigRow {
            index: index + 1,
            omega2,
            freq_hz: omega2.sqrt() / (2.0 * std::f64::consts::PI),
        })?;
    }
    w.flush()?;
    Ok(true)
}

fn run_stats(io: &SceneIo, variant: Option<Variant>, freq: Option<f64>) -> Result<bool> {
    let model = load(io)?;
    let omega = if model.materials.is_conductive() {
        let f = freq
            .or(model.scene.sweep.as_ref().map(|s| s.fmin))
            .context("conductive scene: --freq is required")?;
        Some(2.0 * std::f64::consts::PI * f)
    } else {
        None
    };
    if let Some(path) = &io.export_matrix {
        export_matrix(&model, omega, path)?;
    }
    let diag = build_diagonals(&model.grid, &model.materials, &model.walls, omega)?;
    let variants = variant.map_or_else(|| vec![Variant::E2s, Variant::E2t, Variant::E2tt], |v| vec![v]);
    let mut w = csv::Writer::from_writer(output(&io.output)?);
    for v in variants {
        let curl = build_curl(&model.grid);
        let stats = if diag.is_real() {
            ShellOperator::sequential(Arc::new(OperatorSetup::<f64>::build(v, curl, &diag)?), 0.0).stats()
        } else {
            ShellOperator::sequential(Arc::new(OperatorSetup::<Complex64>::build(v, curl, &diag)?), 0.0).stats()
        };
        w.serialize(stats)?;
    }
    w.flush()?;
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve { common, freq } => run_network(&common, freq, freq, 1),
        Command::Sweep { common, fmin, fmax, nf } => {
            let defaults = parse_scene(&common.io.scene)?.sweep;
            let pick = |v: Option<f64>, d: Option<f64>, name: &str| {
                v.or(d).with_context(|| format!("--{name} is required (the scene has no sweep defaults)"))
            };
            let f_min = pick(fmin, defaults.as_ref().map(|s| s.fmin), "fmin")?;
            let f_max = pick(fmax, defaults.as_ref().map(|s| s.fmax), "fmax")?;
            let n_f = nf
                .or(defaults.as_ref().map(|s| s.nf))
                .context("--nf is required (the scene has no sweep defaults)")?;
            run_network(&common, f_min, f_max, n_f)
        }
        Command::Eig { io, count, max_edges } => run_eig(&io, count, max_edges),
        Command::Stats { io, variant, freq } => run_stats(&io, variant, freq),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: not all solves converged");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
