//! Frequency sweeps over a resolved scene.
//!
//! The curl, the material diagonals and the variant's operator data are
//! built once per sweep and shared; each frequency only changes the shift
//! `omega^2` (and, for conductive scenes, the permittivity diagonal).
//! Lossless scenes are solved in real arithmetic: with unit current the
//! system `(A - omega^2) x = M_eps^{-1/2} t` is real and `e' = -j omega I x`.

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::error::{FitError, Result};
use crate::krylov::{self, Jacobi, SolverConfig};
use crate::materials::{build_diagonals, MaterialDiagonals};
use crate::operator::{LinearOperator, OperatorSetup, ShellOperator, Variant};
pub use crate::parallel::{plan_slices, SlicePlan};
use crate::parallel::Executor;
use crate::ports::{port_voltage, s_from_z, unit_rhs_real, z_parameters, NetworkResult, Port};
use crate::results::{ResultRow, ResultTable};
use crate::scalar::Scalar;
use crate::scene::Model;
use crate::topology::{build_curl, SparseOperator};

/// Where the worker pool is spent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParallelMode {
    /// Slice-parallel products and reductions inside every solve.
    #[default]
    InSolve,
    /// Whole (frequency, port) solves distributed over workers.
    AcrossSolves,
}

impl FromStr for ParallelMode {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-solve" => Ok(ParallelMode::InSolve),
            "across-solves" => Ok(ParallelMode::AcrossSolves),
            other => Err(FitError::InvalidArgument(format!(
                "unknown parallel mode '{other}' (expected in-solve or across-solves)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Excitation {
    /// One solve per port; yields Z and S.
    #[default]
    PerPort,
    /// All ports driven together in one solve; yields port voltages only.
    Superposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub n_f: usize,
    pub solver: SolverConfig,
    pub variant: Variant,
    pub workers: usize,
    pub mode: ParallelMode,
    pub excitation: Excitation,
    /// Print one line per frequency to stderr.
    pub progress: bool,
}

impl SweepConfig {
    pub fn new(f_min: f64, f_max: f64, n_f: usize) -> SweepConfig {
        SweepConfig {
            f_min,
            f_max,
            n_f,
            solver: SolverConfig::default(),
            variant: Variant::E2tt,
            workers: 1,
            mode: ParallelMode::InSolve,
            excitation: Excitation::PerPort,
            progress: false,
        }
    }

    pub fn single(freq: f64) -> SweepConfig {
        SweepConfig::new(freq, freq, 1)
    }

    /// Equidistant samples from `f_min` to `f_max`.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        if !(self.f_min > 0.0 && self.f_min.is_finite()) {
            return Err(FitError::InvalidArgument(format!("f_min must be > 0, got {}", self.f_min)));
        }
        if !(self.f_max >= self.f_min && self.f_max.is_finite()) {
            return Err(FitError::InvalidArgument(format!(
                "f_max ({}) must not be below f_min ({})",
                self.f_max, self.f_min
            )));
        }
        if self.n_f == 0 {
            return Err(FitError::InvalidArgument("n_f must be >= 1".into()));
        }
        if self.n_f == 1 {
            return Ok(vec![self.f_min]);
        }
        let step = (self.f_max - self.f_min) / (self.n_f - 1) as f64;
        Ok((0..self.n_f)
            .map(|i| if i + 1 == self.n_f { self.f_max } else { self.f_min + step * i as f64 })
            .collect())
    }
}

/// How often each frequency-independent part was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BuildCounts {
    pub curl: usize,
    pub diagonals: usize,
    pub operator: usize,
}

#[derive(Debug, Default)]
struct Counts {
    curl: AtomicUsize,
    diagonals: AtomicUsize,
    operator: AtomicUsize,
}

enum Setup {
    Real(Arc<OperatorSetup<f64>>, MaterialDiagonals),
    Complex(Arc<OperatorSetup<Complex64>>, MaterialDiagonals),
    /// Conductivity makes `M_eps` frequency dependent.
    Conductive,
}

/// Frequency-independent data of one scene.
pub struct Problem<'m> {
    model: &'m Model,
    variant: Variant,
    curl: SparseOperator<f64>,
    setup: Setup,
    counts: Counts,
}

/// Outcome of one linear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    /// Terminal voltage of every port.
    pub voltages: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub breakdown: Option<String>,
    pub applies: u64,
    pub mults: u64,
    pub wall_s: f64,
}

impl<'m> Problem<'m> {
    pub fn new(model: &'m Model, variant: Variant) -> Result<Problem<'m>> {
        let counts = Counts::default();
        let curl = build_curl(&model.grid);
        counts.curl.fetch_add(1, Ordering::Relaxed);
        let setup = if model.materials.is_conductive() {
            Setup::Conductive
        } else {
            let diag = build_diagonals(&model.grid, &model.materials, &model.walls, None)?;
            counts.diagonals.fetch_add(1, Ordering::Relaxed);
            let s = if diag.is_real() {
                Setup::Real(Arc::new(OperatorSetup::build(variant, curl.clone(), &diag)?), diag)
            } else {
                Setup::Complex(Arc::new(OperatorSetup::build(variant, curl.clone(), &diag)?), diag)
            };
            counts.operator.fetch_add(1, Ordering::Relaxed);
            s
        };
        Ok(Problem {
            model,
            variant,
            curl,
            setup,
            counts,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn is_real(&self) -> bool {
        matches!(self.setup, Setup::Real(..))
    }

    pub fn builds(&self) -> BuildCounts {
        BuildCounts {
            curl: self.counts.curl.load(Ordering::Relaxed),
            diagonals: self.counts.diagonals.load(Ordering::Relaxed),
            operator: self.counts.operator.load(Ordering::Relaxed),
        }
    }

    /// Model multiplications per operator apply.
    pub fn mults_per_apply(&self) -> u64 {
        self.variant.mults_per_unknown() * self.model.grid.n_edges() as u64
    }

    fn conductive_setup(&self, omega: f64) -> Result<(Arc<OperatorSetup<Complex64>>, MaterialDiagonals)> {
        let m = self.model;
        let diag = build_diagonals(&m.grid, &m.materials, &m.walls, Some(omega))?;
        self.counts.diagonals.fetch_add(1, Ordering::Relaxed);
        let setup = OperatorSetup::build(self.variant, self.curl.clone(), &diag)?;
        self.counts.operator.fetch_add(1, Ordering::Relaxed);
        Ok((Arc::new(setup), diag))
    }

    /// Solves with the given ports driven by their currents scaled by
    /// `weights` (one entry per port, zero for undriven ports).
    pub fn solve(
        &self,
        freq: f64,
        weights: &[Complex64],
        config: &SolverConfig,
        exec: &Executor,
        plan: &SlicePlan,
    ) -> Result<SolveOutcome> {
        if !(freq > 0.0) {
            return Err(FitError::InvalidArgument(format!("frequency must be > 0, got {freq}")));
        }
        let ports = &self.model.ports;
        if weights.len() != ports.len() {
            return Err(FitError::DimensionMismatch {
                expected: ports.len(),
                got: weights.len(),
            });
        }
        let omega = 2.0 * std::f64::consts::PI * freq;
        let start = Instant::now();
        let mut out = match &self.setup {
            Setup::Real(setup, diag) => solve_real(setup, diag, ports, weights, omega, config, exec, plan)?,
            Setup::Complex(setup, diag) => solve_complex(setup, diag, ports, weights, omega, config, exec, plan)?,
            Setup::Conductive => {
                let (setup, diag) = self.conductive_setup(omega)?;
                solve_complex(&setup, &diag, ports, weights, omega, config, exec, plan)?
            }
        };
        out.wall_s = start.elapsed().as_secs_f64();
        Ok(out)
    }

    /// Drives port `n` alone.
    pub fn solve_port(
        &self,
        freq: f64,
        n: usize,
        config: &SolverConfig,
        exec: &Executor,
        plan: &SlicePlan,
    ) -> Result<SolveOutcome> {
        let mut w = vec![Complex64::new(0.0, 0.0); self.model.ports.len()];
        if n >= w.len() {
            return Err(FitError::InvalidArgument(format!("no port {n}")));
        }
        w[n] = Complex64::new(1.0, 0.0);
        self.solve(freq, &w, config, exec, plan)
    }
}

fn run<S: Scalar>(
    setup: &Arc<OperatorSetup<S>>,
    omega: f64,
    rhs: &[S],
    config: &SolverConfig,
    exec: &Executor,
    plan: &SlicePlan,
) -> Result<(krylov::SolveReport<S>, u64, u64)> {
    let mut op = ShellOperator::new(setup.clone(), omega, exec.clone(), plan)?;
    let jacobi = Jacobi::new(&setup.jacobi, omega, Some(&setup.edge_mask));
    let rep = krylov::solve(config, &mut op, &jacobi, rhs, exec)?;
    Ok((rep, op.applies(), op.mults()))
}

#[allow(clippy::too_many_arguments)]
fn solve_real(
    setup: &Arc<OperatorSetup<f64>>,
    diag: &MaterialDiagonals,
    ports: &[Port],
    weights: &[Complex64],
    omega: f64,
    config: &SolverConfig,
    exec: &Executor,
    plan: &SlicePlan,
) -> Result<SolveOutcome> {
    let n_e = diag.n_edges();
    // total drive split into real and imaginary current parts
    let mut rhs = [vec![0.0; n_e], vec![0.0; n_e]];
    for (p, w) in ports.iter().zip(weights) {
        let i = p.current * w;
        if i.norm() == 0.0 {
            continue;
        }
        let unit = unit_rhs_real(p, diag)?;
        for (part, amp) in rhs.iter_mut().zip([i.re, i.im]) {
            if amp != 0.0 {
                for (r, u) in part.iter_mut().zip(&unit) {
                    *r += amp * u;
                }
            }
        }
    }
    let mut e_prime = vec![Complex64::new(0.0, 0.0); n_e];
    let mut out = SolveOutcome {
        voltages: Vec::new(),
        iterations: 0,
        residual: 0.0,
        converged: true,
        breakdown: None,
        applies: 0,
        mults: 0,
        wall_s: 0.0,
    };
    // e' = -j omega (x_re + j x_im)
    let factors = [Complex64::new(0.0, -omega), Complex64::new(omega, 0.0)];
    for (b, factor) in rhs.iter().zip(factors) {
        if b.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (rep, applies, mults) = run(setup, omega, b, config, exec, plan)?;
        for (e, &x) in e_prime.iter_mut().zip(&rep.solution) {
            *e += factor * x;
        }
        merge(&mut out, &rep, applies, mults);
    }
    out.voltages = ports.iter().map(|p| port_voltage(&e_prime, diag, p)).collect();
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn solve_complex(
    setup: &Arc<OperatorSetup<Complex64>>,
    diag: &MaterialDiagonals,
    ports: &[Port],
    weights: &[Complex64],
    omega: f64,
    config: &SolverConfig,
    exec: &Executor,
    plan: &SlicePlan,
) -> Result<SolveOutcome> {
    let n_e = diag.n_edges();
    let mut b = vec![Complex64::new(0.0, 0.0); n_e];
    for (p, w) in ports.iter().zip(weights) {
        if w.norm() == 0.0 {
            continue;
        }
        for (acc, v) in b.iter_mut().zip(crate::ports::build_rhs(p, diag, omega)?) {
            *acc += v * w;
        }
    }
    let (rep, applies, mults) = run(setup, omega, &b, config, exec, plan)?;
    let mut out = SolveOutcome {
        voltages: ports.iter().map(|p| port_voltage(&rep.solution, diag, p)).collect(),
        iterations: 0,
        residual: 0.0,
        converged: true,
        breakdown: None,
        applies: 0,
        mults: 0,
        wall_s: 0.0,
    };
    merge(&mut out, &rep, applies, mults);
    Ok(out)
}

fn merge<S>(out: &mut SolveOutcome, rep: &krylov::SolveReport<S>, applies: u64, mults: u64) {
    out.iterations += rep.iterations;
    out.residual = out.residual.max(rep.relative_residual);
    out.converged &= rep.converged;
    out.applies += applies;
    out.mults += mults;
    if let Some(b) = &rep.breakdown {
        out.breakdown = Some(format!("{} breakdown at iteration {}: {}", rep.method, b.iteration, b.reason));
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub frequencies: Vec<f64>,
    /// Per-frequency network parameters (per-port excitation only).
    pub network: Vec<NetworkResult>,
    pub table: ResultTable,
    pub builds: BuildCounts,
    pub total_iterations: usize,
    pub total_applies: u64,
    pub total_mults: u64,
    pub all_converged: bool,
}

/// Runs a sweep on a resolved scene.
pub fn run_sweep(model: &Model, config: &SweepConfig) -> Result<SweepResult> {
    let problem = Problem::new(model, config.variant)?;
    run_sweep_on(&problem, config)
}

/// Runs a sweep reusing already built frequency-independent data.
pub fn run_sweep_on(problem: &Problem<'_>, config: &SweepConfig) -> Result<SweepResult> {
    let model = problem.model;
    model.require_ports()?;
    let freqs = config.frequencies()?;
    let n_ports = model.ports.len();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    // excitation weight vectors per solve at one frequency
    let drives: Vec<Vec<Complex64>> = match config.excitation {
        Excitation::PerPort => (0..n_ports)
            .map(|n| (0..n_ports).map(|m| if m == n { one } else { zero }).collect())
            .collect(),
        Excitation::Superposed => vec![vec![one; n_ports]],
    };
    let tasks: Vec<(usize, usize)> = (0..freqs.len())
        .flat_map(|f| (0..drives.len()).map(move |d| (f, d)))
        .collect();
    let solve_task = |(f, d): (usize, usize), exec: &Executor, plan: &SlicePlan| {
        problem.solve(freqs[f], &drives[d], &config.solver, exec, plan)
    };
    let outcomes: Vec<Result<SolveOutcome>> = match config.mode {
        ParallelMode::InSolve => {
            let exec = Executor::new(config.workers);
            let plan = plan_slices(&model.grid, config.workers);
            let mut outs = Vec::with_capacity(tasks.len());
            for &t in &tasks {
                let o = solve_task(t, &exec, &plan);
                if config.progress {
                    progress_line(&freqs, t, drives.len(), &o);
                }
                outs.push(o);
            }
            outs
        }
        ParallelMode::AcrossSolves => {
            let plan = SlicePlan::flat(model.grid.n_edges(), 1);
            let exec = Executor::sequential();
            let run_all = || {
                tasks
                    .par_iter()
                    .map(|&t| {
                        let o = solve_task(t, &exec, &plan);
                        if config.progress {
                            progress_line(&freqs, t, drives.len(), &o);
                        }
                        o
                    })
                    .collect::<Vec<_>>()
            };
            match rayon::ThreadPoolBuilder::new().num_threads(config.workers.max(1)).build() {
                Ok(pool) => pool.install(run_all),
                Err(_) => tasks.iter().map(|&t| solve_task(t, &exec, &plan)).collect(),
            }
        }
    };
    if let Some(Err(e)) = outcomes.iter().find(|o| matches!(o, Err(FitError::InvalidArgument(_)))) {
        return Err(FitError::InvalidArgument(e.to_string()));
    }

    let mut network = Vec::new();
    let mut rows = Vec::with_capacity(freqs.len());
    let (mut total_iterations, mut total_applies, mut total_mults) = (0, 0, 0);
    let mut all_converged = true;
    for (fi, &freq) in freqs.iter().enumerate() {
        let outs = &outcomes[fi * drives.len()..(fi + 1) * drives.len()];
        let mut errors = Vec::new();
        let mut iterations = Vec::with_capacity(outs.len());
        let mut residuals = Vec::with_capacity(outs.len());
        let mut voltages = Vec::with_capacity(outs.len());
        let mut wall = 0.0;
        let mut converged = true;
        for o in outs {
            match o {
                Ok(o) => {
                    iterations.push(o.iterations);
                    residuals.push(o.residual);
                    voltages.push(o.voltages.clone());
                    wall += o.wall_s;
                    converged &= o.converged;
                    total_iterations += o.iterations;
                    total_applies += o.applies;
                    total_mults += o.mults;
                    if let Some(b) = &o.breakdown {
                        errors.push(b.clone());
                    }
                }
                Err(e) => {
                    iterations.push(0);
                    residuals.push(f64::NAN);
                    voltages.push(vec![Complex64::new(f64::NAN, f64::NAN); n_ports]);
                    converged = false;
                    errors.push(e.to_string());
                }
            }
        }
        all_converged &= converged;
        match config.excitation {
            Excitation::PerPort => {
                let currents: Vec<Complex64> = model.ports.iter().map(|p| p.current).collect();
                let z = z_parameters(&voltages, &currents)?;
                let s = match s_from_z(&z, model.z0) {
                    Ok(s) => s,
                    Err(e) => {
                        errors.push(e.to_string());
                        nalgebra::DMatrix::from_element(n_ports, n_ports, Complex64::new(f64::NAN, f64::NAN))
                    }
                };
                network.push(NetworkResult {
                    frequency: freq,
                    z,
                    s,
                    iterations,
                    residuals,
                    converged,
                    wall_s: wall,
                    error: (!errors.is_empty()).then(|| errors.join("; ")),
                });
            }
            Excitation::Superposed => {
                rows.push(ResultRow {
                    freq_hz: freq,
                    values: voltages[0].clone(),
                    iters: iterations.iter().sum(),
                    resid: residuals.iter().cloned().fold(0.0, f64::max),
                    wall_s: wall,
                    status: if !errors.is_empty() {
                        errors.join("; ")
                    } else if converged {
                        "ok".into()
                    } else {
                        "not converged".into()
                    },
                });
            }
        }
    }
    let table = match config.excitation {
        Excitation::PerPort => ResultTable::from_network(n_ports, &network),
        Excitation::Superposed => ResultTable {
            columns: (1..=n_ports).map(|m| format!("V{m}")).collect(),
            rows,
        },
    };
    Ok(SweepResult {
        frequencies: freqs,
        network,
        table,
        builds: problem.builds(),
        total_iterations,
        total_applies,
        total_mults,
        all_converged,
    })
}

fn progress_line(freqs: &[f64], (f, d): (usize, usize), n_drives: usize, o: &Result<SolveOutcome>) {
    match o {
        Ok(o) => eprintln!(
            "[{}/{}] f = {:.6e} Hz, drive {}/{}: {} iterations, residual {:.3e}{}",
            f + 1,
            freqs.len(),
            freqs[f],
            d + 1,
            n_drives,
            o.iterations,
            o.residual,
            if o.converged { "" } else { " (not converged)" }
        ),
        Err(e) => eprintln!("[{}/{}] f = {:.6e} Hz: {e}", f + 1, freqs.len(), freqs[f]),
    }
}

/// Strict interior local maxima, refined by a parabola through the sample
/// and its two neighbours. Returns `(x_peak, y_peak)` pairs.
pub fn find_peaks(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len().min(y.len());
    if n < 3 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
        let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
        if !(y1 > y0 && y1 > y2) {
            continue;
        }
        let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
        let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
        let xp = if den != 0.0 { x1 - 0.5 * num / den } else { x1 };
        let xp = xp.clamp(x0, x2);
        // Lagrange form through the three samples
        let yp = y0 * (xp - x1) * (xp - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (xp - x0) * (xp - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (xp - x0) * (xp - x1) / ((x2 - x0) * (x2 - x1));
        peaks.push((xp, yp));
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_grid() {
        let c = SweepConfig::new(1e9, 2e9, 5);
        assert_eq!(c.frequencies().unwrap(), vec![1e9, 1.25e9, 1.5e9, 1.75e9, 2e9]);
        assert_eq!(SweepConfig::single(3e9).frequencies().unwrap(), vec![3e9]);
        assert!(SweepConfig::new(0.0, 1e9, 3).frequencies().is_err());
        assert!(SweepConfig::new(1e9, 2e9, 0).frequencies().is_err());
        assert!(SweepConfig::new(2e9, 1e9, 3).frequencies().is_err());
    }

    #[test]
    fn peaks_of_monotone_column_are_empty() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        assert!(find_peaks(&x, &y).is_empty());
        assert!(find_peaks(&x[..2], &y[..2]).is_empty());
    }

    #[test]
    fn single_symmetric_maximum() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 1.0, 3.0, 1.0, 0.0];
        let p = find_peaks(&x, &y);
        assert_eq!(p, vec![(2.0, 3.0)]);
    }

    #[test]
    fn parabola_is_recovered_exactly_on_uneven_samples() {
        let f = |t: f64| 5.0 - 2.0 * (t - 1.3).powi(2);
        let x = [0.0, 1.0, 1.8, 3.0];
        let y = x.map(f);
        let p = find_peaks(&x, &y);
        assert_eq!(p.len(), 1);
        assert!((p[0].0 - 1.3).abs() < 1e-12);
        assert!((p[0].1 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn lorentzian_center_within_half_spacing() {
        let (x0, gamma) = (2.437e9, 0.05e9);
        let x: Vec<f64> = (0..50).map(|i| 2.0e9 + 1.0e9 * i as f64 / 49.0).collect();
        let y: Vec<f64> = x.iter().map(|&t| 1.0 / ((t - x0).powi(2) + gamma * gamma)).collect();
        let p = find_peaks(&x, &y);
        assert_eq!(p.len(), 1);
        let spacing = x[1] - x[0];
        assert!((p[0].0 - x0).abs() < 0.5 * spacing);
    }
}
