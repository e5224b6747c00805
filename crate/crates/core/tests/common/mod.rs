#![allow(dead_code)]

use std::sync::Arc;

use fit_core::materials::{build_diagonals, Boundary, MaterialDiagonals, MaterialMap, Walls};
use fit_core::operator::{OperatorSetup, ShellOperator, Variant};
use fit_core::topology::build_curl;
use fit_core::{Complex64, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct RandomScene {
    pub grid: Grid,
    pub map: MaterialMap,
    pub walls: Walls,
}

impl RandomScene {
    pub fn diagonals(&self) -> MaterialDiagonals {
        build_diagonals(&self.grid, &self.map, &self.walls, None).unwrap()
    }

    pub fn operator(&self, variant: Variant, omega: f64) -> ShellOperator<f64> {
        let setup = OperatorSetup::build(variant, build_curl(&self.grid), &self.diagonals()).unwrap();
        ShellOperator::sequential(Arc::new(setup), omega)
    }
}

pub fn random_planes(rng: &mut ChaCha8Rng, cells: usize, scale: f64) -> Vec<f64> {
    let mut p = vec![0.0];
    for _ in 0..cells {
        let last = *p.last().unwrap();
        p.push(last + scale * rng.gen_range(0.2..1.5));
    }
    p
}

pub fn random_grid(rng: &mut ChaCha8Rng, max_cells: usize) -> Grid {
    let scale = 10f64.powf(rng.gen_range(-3.0..0.0));
    let cells: Vec<usize> = (0..3).map(|_| rng.gen_range(1..=max_cells)).collect();
    Grid::new(
        random_planes(rng, cells[0], scale),
        random_planes(rng, cells[1], scale),
        random_planes(rng, cells[2], scale),
    )
    .unwrap()
}

/// Lossless scene with at most `max_cells` cells per axis: random planes,
/// permittivity, permeability, walls and occasional PEC cells.
pub fn random_scene(seed: u64, max_cells: usize) -> RandomScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = random_grid(&mut rng, max_cells);
    let mut map = MaterialMap::vacuum(&grid);
    for c in grid.iter_cells().collect::<Vec<_>>() {
        if rng.gen_bool(0.05) {
            map.set_pec(c);
        } else {
            let eps = rng.gen_range(1.0..13.0);
            let mu = if rng.gen_bool(0.3) { rng.gen_range(1.0..3.0) } else { 1.0 };
            map.set_cell(c, Complex64::new(eps, 0.0), Complex64::new(mu, 0.0), 0.0);
        }
    }
    let mut walls = Walls::default();
    for a in 0..3 {
        for side in [&mut walls.lo, &mut walls.hi] {
            side[a] = if rng.gen_bool(0.5) { Boundary::Pec } else { Boundary::Pmc };
        }
    }
    RandomScene { grid, map, walls }
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn rel_inf_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    inf_norm(&d) / inf_norm(b).max(f64::MIN_POSITIVE)
}
