//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use common::*;
use fit_core::krylov::{Method, SolverConfig};
use fit_core::materials::{build_diagonals, MaterialMap, Walls};
use fit_core::operator::{LinearOperator, OperatorSetup, ShellOperator, Variant};
use fit_core::oracle::{dense_assemble, discrete_cavity_spectrum, cavity_omega2_discrete, split_zero_eigenvalues};
use fit_core::parallel::{plan_slices, Executor};
use fit_core::presets::{cavity, Microstrip};
use fit_core::sweep::{run_sweep, ParallelMode, Problem, SweepConfig, SweepResult};
use fit_core::topology::{build_curl, build_gradient};
use fit_core::{Complex64, Grid};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Operator variants agree with each other and with the dense matrix.
fn c1_variant_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = Grid::new(
        random_planes(&mut rng, 3, 0.01),
        random_planes(&mut rng, 4, 0.01),
        random_planes(&mut rng, 5, 0.01),
    )
    .unwrap();
    let mut map = MaterialMap::vacuum(&grid);
    let choices = [1.0, 2.7, 12.3];
    for c in grid.iter_cells().collect::<Vec<_>>() {
        let eps = choices[rng.gen_range(0..3)];
        map.set_cell(c, Complex64::new(eps, 0.0), Complex64::new(1.0, 0.0), 0.0);
    }
    let mut walls = Walls::default();
    walls.hi[2] = fit_core::materials::Boundary::Pmc;
    walls.lo[0] = fit_core::materials::Boundary::Pmc;
    let diag = build_diagonals(&grid, &map, &walls, None).unwrap();
    let dense = dense_assemble(&grid, &diag).map_err(|e| e.to_string())?;
    let omega = TWO_PI * 5e9;
    let mut ops: Vec<ShellOperator<f64>> = Variant::ALL
        .iter()
        .map(|&v| {
            let setup = OperatorSetup::build(v, build_curl(&grid), &diag).unwrap();
            ShellOperator::sequential(Arc::new(setup), omega)
        })
        .collect();
    let n = grid.n_edges();
    let (mut worst_variant, mut worst_dense) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let x = random_vector(&mut rng, n);
        let reference = dense.apply_full(&x, omega);
        let mut ys = Vec::new();
        for op in ops.iter_mut() {
            let mut y = vec![0.0; n];
            op.apply(&x, &mut y).unwrap();
            worst_dense = worst_dense.max(rel_inf_diff(&y, &reference));
            ys.push(y);
        }
        worst_variant = worst_variant.max(rel_inf_diff(&ys[1], &ys[0])).max(rel_inf_diff(&ys[2], &ys[0]));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst_variant <= 1e-12, format!("variants differ by {worst_variant:e}"))?;
    ensure(worst_dense <= 1e-12, format!("dense oracle differs by {worst_dense:e}"))?;
    ensure(secs < 1.0, format!("took {secs:.2} s"))?;
    Ok(format!(
        "n_e = {n}, variant spread {worst_variant:.1e}, dense deviation {worst_dense:.1e}, {secs:.3} s"
    ))
}

/// Operator cost table: model multiplications and memory per variant.
fn c2_cost_table() -> Outcome {
    let model = Microstrip::small().scene().compile().unwrap();
    let diag = build_diagonals(&model.grid, &model.materials, &model.walls, None).unwrap();
    let n = model.grid.n_edges() as u64;
    let expected = [(Variant::E2s, 13, 164), (Variant::E2t, 12, 80), (Variant::E2tt, 9, 72)];
    let mut parts = Vec::new();
    for (v, mults, bytes) in expected {
        let setup = OperatorSetup::build(v, build_curl(&model.grid), &diag).unwrap();
        let mut op = ShellOperator::<f64>::sequential(Arc::new(setup), 1e10);
        let stats = op.stats();
        ensure(stats.mults_per_apply == mults * n, format!("{v}: {} mults", stats.mults_per_apply))?;
        ensure(stats.memory_bytes == bytes * n, format!("{v}: {} bytes", stats.memory_bytes))?;
        let x = vec![1.0; n as usize];
        let mut y = vec![0.0; n as usize];
        for _ in 0..7 {
            op.apply(&x, &mut y).unwrap();
        }
        let c = op.counters();
        ensure(c.applies == 7 && c.mults == 7 * mults * n, format!("{v}: counters {c:?}"))?;
        parts.push(format!("{v} {}n_e/{}n_e B", mults, bytes));
    }
    Ok(format!("n_e = {n}: {}", parts.join(", ")))
}

/// Dense spectrum of the 1 m vacuum cube with 10 cells per axis.
fn c3_cavity_modes() -> Outcome {
    let start = Instant::now();
    let model = cavity([1.0; 3], [10, 10, 10]).compile().unwrap();
    let diag = build_diagonals(&model.grid, &model.materials, &model.walls, None).unwrap();
    let dense = dense_assemble(&model.grid, &diag).map_err(|e| e.to_string())?;
    let ev = dense.eigenvalues();
    let (zeros, nonzero) = split_zero_eigenvalues(&ev, 1e-8);
    let analytic = discrete_cavity_spectrum([1.0; 3], [10, 10, 10]);
    ensure(
        nonzero.len() == analytic.len(),
        format!("{} nonzero eigenvalues, {} expected", nonzero.len(), analytic.len()),
    )?;
    let worst = nonzero
        .iter()
        .zip(&analytic)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    ensure(worst <= 1e-10, format!("worst relative eigenvalue error {worst:e}"))?;
    let te101 = cavity_omega2_discrete([1.0; 3], [0.1; 3], [1, 0, 1]).unwrap();
    let nearest = nonzero
        .iter()
        .copied()
        .min_by(|a, b| (a - te101).abs().total_cmp(&(b - te101).abs()))
        .unwrap();
    let f = nearest.sqrt() / TWO_PI;
    let dev = (f - 211.985e6).abs() / 211.985e6;
    ensure(dev < 0.01, format!("TE101 at {f:e} Hz, {dev:.3e} off"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "{} unknowns, {zeros} zero modes, {} modes within {worst:.1e}, TE101 {:.4} MHz ({:.2}% off), {secs:.1} s",
        dense.dim(),
        nonzero.len(),
        f / 1e6,
        100.0 * dev
    ))
}

/// Preconditioner diagonal equals the dense diagonal.
fn c4_jacobi_diagonal() -> Outcome {
    let mut worst = 0.0f64;
    for seed in [11, 12, 13] {
        let s = random_scene(seed, 4);
        let diag = s.diagonals();
        let dense = dense_assemble(&s.grid, &diag).map_err(|e| e.to_string())?.diagonal_full();
        let scale = inf_norm(&dense);
        for v in Variant::ALL {
            let setup = OperatorSetup::<f64>::build(v, build_curl(&s.grid), &diag).unwrap();
            for (a, b) in setup.jacobi.iter().zip(&dense) {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    ensure(worst <= 1e-14, format!("deviation {worst:e}"))?;
    Ok(format!("3 scenes x 3 variants, max relative deviation {worst:.1e}"))
}

/// `C G = 0` in integer arithmetic for every grid up to 5 x 5 x 5 cells.
fn c5_curl_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut grids = 0;
    for nx in 1..=5 {
        for ny in 1..=5 {
            for nz in 1..=5 {
                let g = Grid::new(
                    random_planes(&mut rng, nx, 1.0),
                    random_planes(&mut rng, ny, 1.0),
                    random_planes(&mut rng, nz, 1.0),
                )
                .unwrap();
                let c = build_curl(&g);
                let grad = build_gradient(&g);
                for r in 0..c.n_rows() {
                    let mut acc = vec![0i64; g.n_nodes()];
                    let (cols, vals) = c.row(r);
                    for (&e, &v) in cols.iter().zip(vals) {
                        let (gc, gv) = grad.row(e as usize);
                        for (&node, &w) in gc.iter().zip(gv) {
                            acc[node as usize] += v as i64 * w as i64;
                        }
                    }
                    ensure(acc.iter().all(|&a| a == 0), format!("row {r} of {nx}x{ny}x{nz}"))?;
                }
                grids += 1;
            }
        }
    }
    Ok(format!("{grids} grids"))
}

/// All four standard solvers converge on the two-port line and agree on Z11.
fn c6_solver_suite() -> Outcome {
    let start = Instant::now();
    let model = Microstrip::standard().scene().compile().unwrap();
    let problem = Problem::new(&model, Variant::E2tt).unwrap();
    let exec = Executor::sequential();
    let plan = plan_slices(&model.grid, 1);
    let freq = 2e9;
    let mut z11 = Vec::new();
    let mut notes = Vec::new();
    for m in Method::STANDARD {
        let cfg = SolverConfig::with_method(m);
        let o = problem.solve_port(freq, 0, &cfg, &exec, &plan).map_err(|e| e.to_string())?;
        ensure(
            o.converged && o.residual < 1e-12,
            format!("{m}: residual {:e} after {} iterations", o.residual, o.iterations),
        )?;
        let z = o.voltages[0] / model.ports[0].current;
        notes.push(format!("{m} {}", o.iterations));
        z11.push(z);
    }
    let reference = z11[0];
    let spread = z11.iter().map(|z| (z - reference).norm() / reference.norm()).fold(0.0, f64::max);
    ensure(spread <= 1e-6, format!("Z11 spread {spread:e}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, format!("took {secs:.0} s"))?;
    Ok(format!(
        "{} unknowns, Z11 = {:.6} ohm, spread {spread:.1e}, iterations [{}], {secs:.1} s",
        model.n_unknowns(),
        reference,
        notes.join(", ")
    ))
}

fn sweep(model: &fit_core::scene::Model, workers: usize, mode: ParallelMode, nf: usize) -> SweepResult {
    let mut cfg = SweepConfig::new(1e9, 4e9, nf);
    cfg.workers = workers;
    cfg.mode = mode;
    cfg.solver.method = Method::Cg;
    run_sweep(model, &cfg).unwrap()
}

/// `Z12 = Z21` over a ten point sweep.
fn c7_reciprocity() -> Outcome {
    let model = Microstrip::standard().scene().compile().unwrap();
    let res = sweep(&model, 1, ParallelMode::InSolve, 10);
    ensure(res.all_converged, "not all solves converged")?;
    let worst = res.network.iter().map(|r| r.reciprocity_error()).fold(0.0, f64::max);
    ensure(worst <= 1e-6, format!("reciprocity error {worst:e}"))?;
    Ok(format!("10 frequencies, worst |Z21 - Z12| / max|Z| = {worst:.1e}"))
}

fn bits(res: &SweepResult) -> Vec<u64> {
    let mut out = Vec::new();
    for r in &res.network {
        out.push(r.frequency.to_bits());
        for z in r.z.iter().chain(r.s.iter()) {
            out.push(z.re.to_bits());
            out.push(z.im.to_bits());
        }
        out.extend(r.iterations.iter().map(|&i| i as u64));
        out.extend(r.residuals.iter().map(|r| r.to_bits()));
    }
    out
}

/// Identical sweep output for 1, 2 and 4 workers in both parallel modes.
fn c8_determinism() -> Outcome {
    let model = Microstrip::standard().scene().compile().unwrap();
    let reference = bits(&sweep(&model, 1, ParallelMode::InSolve, 3));
    for mode in [ParallelMode::InSolve, ParallelMode::AcrossSolves] {
        for w in [1, 2, 4] {
            let b = bits(&sweep(&model, w, mode, 3));
            ensure(b == reference, format!("{mode:?} with {w} workers differs"))?;
        }
    }
    Ok("3 frequencies x 2 ports, workers {1, 2, 4}, in-solve and across-solves modes".into())
}

/// Strong scaling of one solve at about a million unknowns.
fn c9_scaling() -> Outcome {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let ms = Microstrip::with_unknowns(1_000_000);
    let model = ms.scene().compile().unwrap();
    let problem = Problem::new(&model, Variant::E2tt).unwrap();
    let cfg = SolverConfig::with_method(Method::Cg);
    let mut times = Vec::new();
    let mut iters = Vec::new();
    for w in [1, 2, 4] {
        let exec = Executor::new(w);
        let plan = plan_slices(&model.grid, w);
        let start = Instant::now();
        let o = problem.solve_port(2e9, 0, &cfg, &exec, &plan).map_err(|e| e.to_string())?;
        times.push(start.elapsed().as_secs_f64());
        iters.push(o.iterations);
        ensure(o.converged, format!("{w} workers: not converged ({:e})", o.residual))?;
    }
    let efficiency = times[0] / (4.0 * times[2]);
    let summary = format!(
        "n_e = {}, {cores} core(s), {} iterations, t = [{:.2}, {:.2}, {:.2}] s, efficiency at 4 workers {:.0}%",
        model.grid.n_edges(),
        iters[0],
        times[0],
        times[1],
        times[2],
        100.0 * efficiency
    );
    ensure(times[0] > times[1] && times[1] > times[2], format!("not monotone: {summary}"))?;
    ensure(efficiency >= 0.5, format!("efficiency below 50%: {summary}"))?;
    Ok(summary)
}

/// Symmetry and semi-definiteness on 100 random lossless scenes.
fn c10_random_scenes() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&proptest::prelude::any::<u64>(), |seed| {
        let s = random_scene(seed, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let n = s.grid.n_edges();
        for v in Variant::ALL {
            let mut op = s.operator(v, TWO_PI * 1e9);
            let x = random_vector(&mut rng, n);
            let y = random_vector(&mut rng, n);
            let mut ax = vec![0.0; n];
            let mut ay = vec![0.0; n];
            op.apply(&x, &mut ax).unwrap();
            op.apply(&y, &mut ay).unwrap();
            let (xay, yax) = (dot(&x, &ay), dot(&y, &ax));
            let scale = dot(&x, &x).sqrt() * dot(&ay, &ay).sqrt();
            proptest::prop_assert!((xay - yax).abs() <= 1e-12 * scale, "{v}: {xay} vs {yax}");
            let mut op0 = s.operator(v, 0.0);
            op0.apply(&x, &mut ax).unwrap();
            let xax = dot(&x, &ax);
            let scale = dot(&x, &x).sqrt() * dot(&ax, &ax).sqrt();
            proptest::prop_assert!(xax >= -1e-12 * scale, "{v}: x.Ax = {xax}");
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok("100 scenes x 3 variants".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 operator variant equivalence", c1_variant_equivalence),
        ("2 cost table counters", c2_cost_table),
        ("3 cavity eigenmodes", c3_cavity_modes),
        ("4 preconditioner diagonal", c4_jacobi_diagonal),
        ("5 curl of gradient", c5_curl_gradient),
        ("6 solver suite", c6_solver_suite),
        ("7 reciprocity", c7_reciprocity),
        ("8 parallel determinism", c8_determinism),
        ("9 strong scaling", c9_scaling),
        ("10 random scene properties", c10_random_scenes),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
