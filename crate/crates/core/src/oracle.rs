//! Dense reference implementations for testing: explicit assembly of the
//! system matrix, dense solves and eigendecompositions, and closed-form
//! cavity spectra.
//!
//! The dense curl here is built from Kronecker products of 1D difference
//! matrices in block ordering (all x components, then y, then z) and only
//! afterwards permuted to the interleaved unknown order, so it shares no
//! code with the sparse construction.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{FitError, Result};
use crate::grid::Grid;
use crate::materials::MaterialDiagonals;
use crate::C0;

/// Default limit on the number of unmasked unknowns for dense work.
pub const DENSE_GUARD: usize = 4000;

/// `N x N` forward difference with the last row truncated to `-1`.
fn difference_1d(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        p[(i, i)] = -1.0;
        if i + 1 < n {
            p[(i, i + 1)] = 1.0;
        }
    }
    p
}

/// Node-space difference operators `P_x, P_y, P_z` (x index fastest).
pub fn node_differences(grid: &Grid) -> [DMatrix<f64>; 3] {
    let [nx, ny, nz] = grid.nodes();
    let id = |n| DMatrix::<f64>::identity(n, n);
    let px = id(nz).kronecker(&id(ny)).kronecker(&difference_1d(nx));
    let py = id(nz).kronecker(&difference_1d(ny)).kronecker(&id(nx));
    let pz = difference_1d(nz).kronecker(&id(ny)).kronecker(&id(nx));
    [px, py, pz]
}

/// Interleaved index of block-ordered unknown `axis * N_p + node`.
fn interleave(axis: usize, node: usize) -> usize {
    3 * node + axis
}

/// Dense curl in interleaved ordering:
/// `[[0, -P_z, P_y], [P_z, 0, -P_x], [-P_y, P_x, 0]]` permuted.
pub fn dense_curl(grid: &Grid) -> DMatrix<f64> {
    let np = grid.n_nodes();
    let [px, py, pz] = node_differences(grid);
    let blocks: [[Option<(&DMatrix<f64>, f64)>; 3]; 3] = [
        [None, Some((&pz, -1.0)), Some((&py, 1.0))],
        [Some((&pz, 1.0)), None, Some((&px, -1.0))],
        [Some((&py, -1.0)), Some((&px, 1.0)), None],
    ];
    let mut c = DMatrix::zeros(3 * np, 3 * np);
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            let Some((m, sign)) = blk else { continue };
            for i in 0..np {
                for j in 0..np {
                    let v = m[(i, j)];
                    if v != 0.0 {
                        c[(interleave(bi, i), interleave(bj, j))] = sign * v;
                    }
                }
            }
        }
    }
    c
}

/// Dense gradient `[P_x; P_y; P_z]` in interleaved ordering.
pub fn dense_gradient(grid: &Grid) -> DMatrix<f64> {
    let np = grid.n_nodes();
    let p = node_differences(grid);
    let mut g = DMatrix::zeros(3 * np, np);
    for (axis, m) in p.iter().enumerate() {
        for i in 0..np {
            for j in 0..np {
                g[(interleave(axis, i), j)] = m[(i, j)];
            }
        }
    }
    g
}

/// `A = D_eps^{-1/2} Cᵀ D_mu^{-1} C D_eps^{-1/2}` restricted to the
/// unmasked unknowns.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub matrix: DMatrix<f64>,
    /// Full-space index of each row/column.
    pub index: Vec<usize>,
    pub n_full: usize,
}

/// Assembles the dense system of a lossless scene.
pub fn dense_assemble(grid: &Grid, diag: &MaterialDiagonals) -> Result<DenseSystem> {
    dense_assemble_with_guard(grid, diag, DENSE_GUARD)
}

pub fn dense_assemble_with_guard(grid: &Grid, diag: &MaterialDiagonals, guard: usize) -> Result<DenseSystem> {
    if !diag.is_real() {
        return Err(FitError::InvalidArgument("dense oracle needs real material diagonals".into()));
    }
    let index: Vec<usize> = (0..diag.n_edges()).filter(|&i| !diag.edge_mask[i]).collect();
    if index.len() > guard {
        return Err(FitError::TooLarge(format!(
            "{} unmasked unknowns exceed the dense limit of {guard}",
            index.len()
        )));
    }
    let n_full = grid.n_edges();
    if index.is_empty() {
        return Ok(DenseSystem {
            matrix: DMatrix::zeros(0, 0),
            index,
            n_full,
        });
    }
    let c = dense_curl(grid);
    // half operator restricted to unmasked columns
    let mut half = DMatrix::zeros(n_full, index.len());
    for (col, &e) in index.iter().enumerate() {
        let d = diag.inv_sqrt_eps[e].re;
        for r in 0..n_full {
            let v = c[(r, e)];
            if v != 0.0 {
                half[(r, col)] = diag.inv_sqrt_mu[r].re * v * d;
            }
        }
    }
    let matrix = half.transpose() * &half;
    Ok(DenseSystem { matrix, index, n_full })
}

impl DenseSystem {
    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn diagonal_full(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_full];
        for (i, &e) in self.index.iter().enumerate() {
            d[e] = self.matrix[(i, i)];
        }
        d
    }

    fn restrict<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.index.iter().map(|&e| x[e]).collect()
    }

    /// `(A - omega^2) x` in the full space; masked rows give `-omega^2 x_i`.
    pub fn apply_full(&self, x: &[f64], omega: f64) -> Vec<f64> {
        let w2 = omega * omega;
        let mut y: Vec<f64> = x.iter().map(|&v| -w2 * v).collect();
        let xr = DVector::from_vec(self.restrict(x));
        let yr = &self.matrix * xr;
        for (i, &e) in self.index.iter().enumerate() {
            y[e] += yr[i];
        }
        y
    }

    /// Complex counterpart of [`apply_full`](Self::apply_full).
    pub fn apply_full_complex(&self, x: &[Complex64], omega: f64) -> Vec<Complex64> {
        let re: Vec<f64> = x.iter().map(|z| z.re).collect();
        let im: Vec<f64> = x.iter().map(|z| z.im).collect();
        let yr = self.apply_full(&re, omega);
        let yi = self.apply_full(&im, omega);
        yr.into_iter().zip(yi).map(|(a, b)| Complex64::new(a, b)).collect()
    }

    /// Solves `(A - omega^2) x = b` on the unmasked unknowns by LU.
    pub fn solve(&self, omega: f64, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let w2 = omega * omega;
        let shifted = &self.matrix - DMatrix::<f64>::identity(n, n) * w2;
        let rhs = DVector::from_vec(self.restrict(b));
        let sol = shifted
            .lu()
            .solve(&rhs)
            .ok_or_else(|| FitError::Singular(format!("A - omega^2 I singular at omega = {omega}")))?;
        let mut x = vec![0.0; self.n_full];
        for (i, &e) in self.index.iter().enumerate() {
            x[e] = sol[i];
        }
        Ok(x)
    }

    /// Ascending eigenvalues of `A`.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim() == 0 {
            return Vec::new();
        }
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let max = self.matrix.amax();
        if max == 0.0 {
            return 0.0;
        }
        (&self.matrix - self.matrix.transpose()).amax() / max
    }
}

/// Splits an ascending spectrum into the numerically zero part and the
/// rest, using `tol * max |lambda|` as threshold.
pub fn split_zero_eigenvalues(ev: &[f64], tol: f64) -> (usize, Vec<f64>) {
    let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zeros = ev.iter().filter(|v| v.abs() <= tol * max).count();
    (zeros, ev.iter().copied().filter(|v| v.abs() > tol * max).collect())
}

fn check_mode(mode: [usize; 3]) -> Result<()> {
    if mode.iter().filter(|&&m| m != 0).count() < 2 {
        return Err(FitError::InvalidArgument(format!(
            "cavity mode {mode:?} needs at least two nonzero indices"
        )));
    }
    Ok(())
}

/// `omega^2` of the continuous rectangular PEC cavity mode.
pub fn cavity_omega2(dims: [f64; 3], mode: [usize; 3]) -> Result<f64> {
    check_mode(mode)?;
    let s: f64 = (0..3)
        .map(|a| (mode[a] as f64 * std::f64::consts::PI / dims[a]).powi(2))
        .sum();
    Ok(C0 * C0 * s)
}

/// `omega^2` of the same mode on a uniform grid with spacing `h`.
pub fn cavity_omega2_discrete(dims: [f64; 3], h: [f64; 3], mode: [usize; 3]) -> Result<f64> {
    check_mode(mode)?;
    let s: f64 = (0..3)
        .map(|a| {
            let k = mode[a] as f64 * std::f64::consts::PI / dims[a];
            (2.0 / h[a] * (0.5 * k * h[a]).sin()).powi(2)
        })
        .sum();
    Ok(C0 * C0 * s)
}

/// `(continuous, discrete)` `omega^2` for each requested mode.
pub fn analytic_cavity_eigenvalues(dims: [f64; 3], h: [f64; 3], modes: &[[usize; 3]]) -> Result<Vec<(f64, f64)>> {
    modes
        .iter()
        .map(|&m| Ok((cavity_omega2(dims, m)?, cavity_omega2_discrete(dims, h, m)?)))
        .collect()
}

/// Full nonzero spectrum of the discrete PEC cavity with `cells` uniform
/// cells, ascending and with multiplicity: two polarizations when all mode
/// indices are nonzero, one when exactly one vanishes.
pub fn discrete_cavity_spectrum(dims: [f64; 3], cells: [usize; 3]) -> Vec<f64> {
    let h = [0, 1, 2].map(|a| dims[a] / cells[a] as f64);
    let mut out = Vec::new();
    for m in 0..cells[0] {
        for n in 0..cells[1] {
            for p in 0..cells[2] {
                let mode = [m, n, p];
                let nonzero = mode.iter().filter(|&&i| i != 0).count();
                let mult = match nonzero {
                    3 => 2,
                    2 => 1,
                    _ => 0,
                };
                if mult > 0 {
                    let w2 = cavity_omega2_discrete(dims, h, mode).expect("valid mode");
                    out.extend(std::iter::repeat_n(w2, mult));
                }
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Dimension of the gradient subspace among unmasked unknowns: potentials
/// on nodes whose incident edges are all unknowns, minus the constant when
/// no edge is grounded. Assumes no floating conductors.
pub fn gradient_kernel_dim(grid: &Grid, mask: &[bool]) -> usize {
    let mut grounded = false;
    let mut free = 0;
    for n in grid.iter_nodes() {
        let mut ok = true;
        for a in crate::grid::Axis::ALL {
            let out = (!grid.edge_is_degenerate(a, n)).then(|| grid.edge((n, a)));
            let mut prev = n;
            let inc = if n[a.index()] > 0 {
                prev[a.index()] -= 1;
                Some(grid.edge((prev, a)))
            } else {
                None
            };
            for e in [out, inc].into_iter().flatten() {
                if mask[e] {
                    ok = false;
                    grounded = true;
                }
            }
        }
        if ok {
            free += 1;
        }
    }
    if grounded {
        free
    } else {
        free.saturating_sub(1)
    }
}
