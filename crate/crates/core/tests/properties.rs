mod common;

use std::sync::Arc;

use common::*;
use fit_core::krylov::{jacobi_apply, Method, SolverConfig};
use fit_core::operator::{LinearOperator, OperatorSetup, ShellOperator, Variant};
use fit_core::oracle::dense_assemble;
use fit_core::parallel::{plan_layers, plan_slices, Executor};
use fit_core::ports::{s_from_z, z_from_s};
use fit_core::results::{read_results, write_results, ResultRow, ResultTable};
use fit_core::scene::{parse_scene_str, AxisSpec, GridSpec, MaterialBox, PortSpec, Scene, UniformAxis, WallSpec};
use fit_core::topology::{build_curl, build_gradient};
use fit_core::Complex64;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn curl_of_gradient_vanishes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_grid(&mut rng, 5);
        let c = build_curl(&g);
        let grad = build_gradient(&g);
        let phi: Vec<f64> = (0..g.n_nodes()).map(|i| (i % 7) as f64 - 3.0).collect();
        let mut e = vec![0.0; g.n_edges()];
        grad.spmv(&phi, &mut e).unwrap();
        let mut f = vec![0.0; g.n_edges()];
        c.spmv(&e, &mut f).unwrap();
        prop_assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn operator_is_symmetric_and_psd(seed in any::<u64>()) {
        let s = random_scene(seed, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(!seed);
        let n = s.grid.n_edges();
        let x = random_vector(&mut rng, n);
        let y = random_vector(&mut rng, n);
        for v in Variant::ALL {
            let mut op = s.operator(v, 0.0);
            let (mut ax, mut ay) = (vec![0.0; n], vec![0.0; n]);
            op.apply(&x, &mut ax).unwrap();
            op.apply(&y, &mut ay).unwrap();
            let scale = dot(&x, &x).sqrt() * dot(&ay, &ay).sqrt();
            prop_assert!((dot(&x, &ay) - dot(&y, &ax)).abs() <= 1e-12 * scale);
            let xax = dot(&x, &ax);
            prop_assert!(xax >= -1e-12 * dot(&x, &x).sqrt() * dot(&ax, &ax).sqrt());
        }
    }

    #[test]
    fn operator_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let s = random_scene(seed, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let n = s.grid.n_edges();
        let x = random_vector(&mut rng, n);
        let y = random_vector(&mut rng, n);
        let comb: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        for v in Variant::ALL {
            let mut op = s.operator(v, 3e9);
            let (mut ax, mut ay, mut ac) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            op.apply(&x, &mut ax).unwrap();
            op.apply(&y, &mut ay).unwrap();
            op.apply(&comb, &mut ac).unwrap();
            let expect: Vec<f64> = ax.iter().zip(&ay).map(|(p, q)| a * p + b * q).collect();
            let scale = inf_norm(&ax).max(inf_norm(&ay)) * (a.abs() + b.abs()).max(1e-300);
            let diff = ac.iter().zip(&expect).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            prop_assert!(diff <= 1e-13 * scale.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn variants_agree_with_dense_matrix(seed in any::<u64>(), f in 1e8f64..1e10) {
        let s = random_scene(seed, 3);
        let diag = s.diagonals();
        let dense = dense_assemble(&s.grid, &diag).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let x = random_vector(&mut rng, s.grid.n_edges());
        let omega = 2.0 * std::f64::consts::PI * f;
        let reference = dense.apply_full(&x, omega);
        let jac_ref = dense.diagonal_full();
        for v in Variant::ALL {
            let mut op = s.operator(v, omega);
            let mut y = vec![0.0; x.len()];
            op.apply(&x, &mut y).unwrap();
            prop_assert!(rel_inf_diff(&y, &reference) <= 1e-12);
            let jac = &op.setup().jacobi;
            let scale = inf_norm(&jac_ref);
            prop_assert!(jac.iter().zip(&jac_ref).all(|(p, q)| (p - q).abs() <= 1e-14 * scale));
        }
    }

    #[test]
    fn slice_plans_partition_layers(layers in 1usize..200, workers in 1usize..16) {
        let ranges = plan_layers(layers, workers);
        prop_assert_eq!(ranges.len(), workers);
        prop_assert_eq!(ranges[0].start, 0);
        prop_assert_eq!(ranges.last().unwrap().end, layers);
        for w in ranges.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        let sizes: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn slice_parallel_apply_is_bitwise_stable(seed in any::<u64>(), workers in 2usize..5) {
        let s = random_scene(seed, 4);
        let diag = s.diagonals();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vector(&mut rng, s.grid.n_edges());
        for v in Variant::ALL {
            let setup = Arc::new(OperatorSetup::build(v, build_curl(&s.grid), &diag).unwrap());
            let mut seq = ShellOperator::sequential(setup.clone(), 1e10);
            let plan = plan_slices(&s.grid, workers);
            // every row only reads its own layer range plus one halo layer
            for w in 0..plan.n_workers() {
                let own = plan.index_ranges[w].clone();
                let halo = plan.halo_index_range(w);
                if let fit_core::operator::OperatorParts::E2s { a, .. } = &setup.parts {
                    for r in own {
                        let (cols, _) = a.row(r);
                        prop_assert!(cols.iter().all(|&c| halo.contains(&(c as usize))));
                    }
                }
            }
            let mut par = ShellOperator::new(setup, 1e10, Executor::new(workers), &plan).unwrap();
            let (mut y1, mut y2) = (vec![0.0; x.len()], vec![0.0; x.len()]);
            seq.apply(&x, &mut y1).unwrap();
            par.apply(&x, &mut y2).unwrap();
            prop_assert!(y1.iter().zip(&y2).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn s_and_z_round_trip(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, n, |i, j| {
            let re = if i == j { rng.gen_range(10.0..200.0) } else { rng.gen_range(-20.0..20.0) };
            Complex64::new(re, rng.gen_range(-100.0..100.0))
        });
        let s = s_from_z(&z, 50.0).unwrap();
        let back = z_from_s(&s, 50.0).unwrap();
        prop_assert!((&back - &z).norm() <= 1e-12 * z.norm());
    }

    #[test]
    fn results_csv_round_trip(seed in any::<u64>(), rows in 0usize..6, ports in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns = ResultTable::network_columns(ports);
        let table = ResultTable {
            rows: (0..rows)
                .map(|_| ResultRow {
                    freq_hz: rng.gen_range(1e6..1e11),
                    values: (0..columns.len())
                        .map(|_| Complex64::new(rng.gen::<f64>() * 1e3 - 500.0, rng.gen::<f64>().powi(7)))
                        .collect(),
                    iters: rng.gen_range(0..100_000),
                    resid: rng.gen::<f64>() * 1e-12,
                    wall_s: rng.gen(),
                    status: if rng.gen_bool(0.8) { "ok".into() } else { "breakdown, at 3: \"x\"".into() },
                })
                .collect(),
            columns,
        };
        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        prop_assert_eq!(ResultTable::read_from(&buf[..]).unwrap(), table);
    }

    #[test]
    fn scene_normal_form_is_idempotent(seed in any::<u64>()) {
        let scene = random_scene_file(seed);
        let nf = scene.normal_form();
        let parsed = parse_scene_str(&nf.to_json()).unwrap();
        prop_assert_eq!(&parsed, &nf);
        prop_assert_eq!(parsed.normal_form(), nf);
    }

    #[test]
    fn jacobi_is_positive_on_unknowns(seed in any::<u64>(), f in 0.0f64..1e10) {
        let s = random_scene(seed, 3);
        let op = s.operator(Variant::E2tt, 0.0);
        let setup = op.setup();
        let r = vec![1.0; setup.n_e()];
        let z = jacobi_apply(&setup.jacobi, 2.0 * std::f64::consts::PI * f, Some(&setup.edge_mask), &r);
        for (i, v) in z.iter().enumerate() {
            if setup.edge_mask[i] {
                prop_assert_eq!(*v, 0.0);
            } else {
                prop_assert!(*v > 0.0 && v.is_finite());
            }
        }
    }
}

fn random_scene_file(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.5) {
            AxisSpec::Uniform(UniformAxis {
                start: rng.gen_range(-1.0..0.0),
                stop: rng.gen_range(0.1..2.0),
                cells: rng.gen_range(1..6),
            })
        } else {
            let cells = rng.gen_range(1..6);
            AxisSpec::Planes(random_planes(rng, cells, 0.37))
        }
    };
    let grid = GridSpec {
        x: axis(&mut rng),
        y: axis(&mut rng),
        z: axis(&mut rng),
    };
    let materials = (0..rng.gen_range(0..4))
        .map(|i| MaterialBox {
            name: (i % 2 == 0).then(|| format!("box{i}")),
            min: [rng.gen(), rng.gen(), rng.gen()],
            max: [rng.gen::<f64>() + 1.0, rng.gen::<f64>() + 1.0, rng.gen::<f64>() + 1.0],
            eps_r: rng.gen_range(1.0..20.0),
            eps_r_imag: -rng.gen::<f64>(),
            mu_r: rng.gen_range(1.0..3.0),
            sigma: rng.gen::<f64>() * 10.0,
            pec: rng.gen_bool(0.2),
        })
        .collect();
    let ports = (0..rng.gen_range(0..3))
        .map(|i| PortSpec {
            name: format!("p{i}"),
            nodes: vec![[0, 0, 0], [0, 0, 1]],
            current: [rng.gen(), rng.gen()],
        })
        .collect();
    Scene {
        grid,
        walls: WallSpec::default(),
        materials,
        ports,
        probes: Vec::new(),
        z0: rng.gen_range(1.0..100.0),
        sweep: None,
    }
}

#[test]
fn cgs_runs_when_enabled() {
    let model = fit_core::presets::Microstrip::small().scene().compile().unwrap();
    let problem = fit_core::sweep::Problem::new(&model, Variant::E2t).unwrap();
    let plan = plan_slices(&model.grid, 1);
    let exec = Executor::sequential();
    let cg = problem.solve_port(3e9, 0, &SolverConfig::with_method(Method::Cg), &exec, &plan).unwrap();
    let cgs = problem.solve_port(3e9, 0, &SolverConfig::with_method(Method::Cgs), &exec, &plan).unwrap();
    assert!(cgs.converged, "{}", cgs.residual);
    assert!((cgs.voltages[0] - cg.voltages[0]).norm() <= 1e-6 * cg.voltages[0].norm());
    let mut off = SolverConfig::with_method(Method::Cgs);
    off.allow_cgs = false;
    assert!(problem.solve_port(3e9, 0, &off, &exec, &plan).is_err());
}

#[test]
fn results_file_round_trip_and_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let empty = ResultTable {
        columns: ResultTable::network_columns(1),
        rows: Vec::new(),
    };
    let path = dir.path().join("empty.csv");
    write_results(&empty, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("freq_hz,re_Z11,im_Z11,re_S11,im_S11,iters,resid,wall_s"));
    assert_eq!(read_results(&path).unwrap(), empty);

    let one = ResultTable {
        columns: ResultTable::network_columns(1),
        rows: vec![ResultRow {
            freq_hz: 1.5e9,
            values: vec![Complex64::new(12.5, -3.0), Complex64::new(-0.6, 0.1)],
            iters: 42,
            resid: 3.3e-13,
            wall_s: 0.25,
            status: "ok".into(),
        }],
    };
    let path = dir.path().join("one.csv");
    write_results(&one, &path).unwrap();
    assert_eq!(read_results(&path).unwrap(), one);
    assert!(write_results(&one, dir.path().join("missing").join("x.csv")).is_err());
}
