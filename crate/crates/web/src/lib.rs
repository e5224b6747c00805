//! Browser bindings: cavity resonances, a microstrip sweep and operator
//! statistics, each returned as a JSON string.

use std::sync::Arc;

use fit_core::krylov::{Method, SolverConfig};
use fit_core::materials::build_diagonals;
use fit_core::operator::{OperatorSetup, OperatorStats, ShellOperator, Variant};
use fit_core::oracle::{dense_assemble_with_guard, discrete_cavity_spectrum, split_zero_eigenvalues};
use fit_core::presets::{cavity, Microstrip};
use fit_core::sweep::{find_peaks, run_sweep, SweepConfig};
use fit_core::topology::build_curl;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest system the dense eigen solve accepts in the browser.
pub const DENSE_LIMIT: usize = 2500;
/// Largest microstrip the sweep accepts in the browser.
pub const SWEEP_LIMIT: usize = 40_000;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct Mode {
    computed_hz: f64,
    expected_hz: f64,
}

#[derive(Serialize)]
struct Spectrum {
    n_edges: usize,
    static_modes: usize,
    modes: Vec<Mode>,
}

/// Lowest `count` resonances of an empty PEC box (dimensions in metres)
/// next to the closed-form values of the same grid.
#[wasm_bindgen]
pub fn cavity_spectrum(lx: f64, ly: f64, lz: f64, nx: usize, ny: usize, nz: usize, count: usize) -> Result<String, String> {
    let dims = [lx, ly, lz];
    let cells = [nx, ny, nz];
    let model = cavity(dims, cells).compile().map_err(err)?;
    let diag = build_diagonals(&model.grid, &model.materials, &model.walls, None).map_err(err)?;
    let dense = dense_assemble_with_guard(&model.grid, &diag, DENSE_LIMIT).map_err(err)?;
    let (static_modes, computed) = split_zero_eigenvalues(&dense.eigenvalues(), 1e-9);
    let expected = discrete_cavity_spectrum(dims, cells);
    let to_hz = |w2: f64| w2.max(0.0).sqrt() / TWO_PI;
    let modes = computed
        .iter()
        .zip(&expected)
        .take(count)
        .map(|(&c, &e)| Mode {
            computed_hz: to_hz(c),
            expected_hz: to_hz(e),
        })
        .collect();
    serde_json::to_string(&Spectrum {
        n_edges: model.grid.n_edges(),
        static_modes,
        modes,
    })
    .map_err(err)
}

#[derive(Serialize)]
struct SweepPoint {
    freq_hz: f64,
    z11: [f64; 2],
    z21: [f64; 2],
    s11_db: f64,
    s21_db: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct SweepOut {
    n_edges: usize,
    points: Vec<SweepPoint>,
    /// Resonances located from the |Z11| samples.
    peaks_hz: Vec<f64>,
    all_converged: bool,
    wall_s: f64,
}

fn db(x: f64) -> f64 {
    20.0 * x.max(1e-300).log10()
}

/// Two-port sweep of a shielded microstrip with `cells_x` cells along the
/// line (the other axes scale with it).
#[wasm_bindgen]
pub fn microstrip_sweep(cells_x: usize, eps_r: f64, fmin_hz: f64, fmax_hz: f64, nf: usize, solver: &str) -> Result<String, String> {
    let base = Microstrip::small();
    let s = cells_x as f64 / base.cells[0] as f64;
    let m = Microstrip {
        cells: [cells_x, ((base.cells[1] as f64 * s).round() as usize).max(6), ((base.cells[2] as f64 * s).round() as usize).max(4)],
        eps_r,
        margin: (cells_x / 6).max(1),
        width: ((base.width as f64 * s).round() as usize).max(1),
        ..base
    };
    if m.n_edges() > SWEEP_LIMIT {
        return Err(format!("{} edges exceed the demo limit of {SWEEP_LIMIT}", m.n_edges()));
    }
    let model = m.scene().compile().map_err(err)?;
    let mut cfg = SweepConfig::new(fmin_hz, fmax_hz, nf);
    cfg.solver = SolverConfig::with_method(solver.parse::<Method>().map_err(err)?);
    cfg.solver.allow_cgs = true;
    let res = run_sweep(&model, &cfg).map_err(err)?;
    let points: Vec<SweepPoint> = res
        .network
        .iter()
        .map(|r| SweepPoint {
            freq_hz: r.frequency,
            z11: [r.z[(0, 0)].re, r.z[(0, 0)].im],
            z21: [r.z[(1, 0)].re, r.z[(1, 0)].im],
            s11_db: db(r.s[(0, 0)].norm()),
            s21_db: db(r.s[(1, 0)].norm()),
            iterations: r.total_iterations(),
        })
        .collect();
    let mag: Vec<f64> = res.network.iter().map(|r| r.z[(0, 0)].norm()).collect();
    let peaks_hz = find_peaks(&res.frequencies, &mag).into_iter().map(|p| p.0).collect();
    serde_json::to_string(&SweepOut {
        n_edges: model.grid.n_edges(),
        points,
        peaks_hz,
        all_converged: res.all_converged,
        wall_s: res.network.iter().map(|r| r.wall_s).sum(),
    })
    .map_err(err)
}

/// Memory and multiplication counts of the three operator variants on a
/// microstrip of about `unknowns` edges.
#[wasm_bindgen]
pub fn variant_stats(unknowns: usize) -> Result<String, String> {
    let m = Microstrip::with_unknowns(unknowns.min(2_000_000));
    let model = m.scene().compile().map_err(err)?;
    let diag = build_diagonals(&model.grid, &model.materials, &model.walls, None).map_err(err)?;
    let stats: Vec<OperatorStats> = [Variant::E2s, Variant::E2t, Variant::E2tt]
        .into_iter()
        .map(|v| {
            let setup = OperatorSetup::<f64>::build(v, build_curl(&model.grid), &diag)?;
            Ok(ShellOperator::sequential(Arc::new(setup), 0.0).stats())
        })
        .collect::<fit_core::Result<_>>()
        .map_err(err)?;
    serde_json::to_string(&stats).map_err(err)
}
