//! Diagonal material matrices, boundary masks and the scaled curl.
//!
//! `M_eps` lives on primal edges (averaged over the dual facet each edge
//! pierces), `M_mu^{-1}` on primal facets (averaged along the dual edge that
//! pierces each facet). PEC is imposed by zeroing `M_eps^{-1/2}` on every
//! edge that must carry no tangential field.

use num_complex::Complex64;

use crate::error::{FitError, Result};
use crate::grid::{Axis, Grid};
use crate::scalar::Scalar;
use crate::topology::SparseOperator;
use crate::{EPS0, MU0};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Pec,
    Pmc,
}

/// Boundary condition per domain face: `lo[axis]` at the minimal plane,
/// `hi[axis]` at the maximal plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Walls {
    pub lo: [Boundary; 3],
    pub hi: [Boundary; 3],
}

impl Walls {
    pub fn all(b: Boundary) -> Walls {
        Walls { lo: [b; 3], hi: [b; 3] }
    }
}

/// Inclusive node-index box; used for zero-thickness conductors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl NodeBox {
    fn contains(&self, n: [usize; 3]) -> bool {
        (0..3).all(|a| self.lo[a] <= n[a] && n[a] <= self.hi[a])
    }
}

/// Per-cell material description.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMap {
    cells: [usize; 3],
    pub eps_r: Vec<Complex64>,
    pub mu_r: Vec<Complex64>,
    /// Conductivity in S/m.
    pub sigma: Vec<f64>,
    pub pec: Vec<bool>,
    /// Conducting sheets and wires that do not fill whole cells.
    pub pec_sheets: Vec<NodeBox>,
}

impl MaterialMap {
    pub fn vacuum(grid: &Grid) -> MaterialMap {
        let n = grid.n_cells();
        MaterialMap {
            cells: grid.cells(),
            eps_r: vec![Complex64::new(1.0, 0.0); n],
            mu_r: vec![Complex64::new(1.0, 0.0); n],
            sigma: vec![0.0; n],
            pec: vec![false; n],
            pec_sheets: Vec::new(),
        }
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    #[inline]
    fn cell(&self, c: [usize; 3]) -> usize {
        c[0] + self.cells[0] * (c[1] + self.cells[1] * c[2])
    }

    pub fn set_cell(&mut self, c: [usize; 3], eps_r: Complex64, mu_r: Complex64, sigma: f64) {
        let i = self.cell(c);
        self.eps_r[i] = eps_r;
        self.mu_r[i] = mu_r;
        self.sigma[i] = sigma;
        self.pec[i] = false;
    }

    pub fn set_pec(&mut self, c: [usize; 3]) {
        let i = self.cell(c);
        self.pec[i] = true;
    }

    pub fn is_pec(&self, c: [usize; 3]) -> bool {
        self.pec[self.cell(c)]
    }

    /// True when every non-PEC cell has real `eps_r`, `mu_r` and zero `sigma`.
    pub fn is_lossless(&self) -> bool {
        (0..self.eps_r.len()).all(|i| {
            self.pec[i] || (self.eps_r[i].im == 0.0 && self.mu_r[i].im == 0.0 && self.sigma[i] == 0.0)
        })
    }

    pub fn is_conductive(&self) -> bool {
        self.sigma
            .iter()
            .zip(&self.pec)
            .any(|(&s, &p)| !p && s != 0.0)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.cells != grid.cells() {
            return Err(FitError::InvalidArgument(format!(
                "material map has {:?} cells, grid has {:?}",
                self.cells,
                grid.cells()
            )));
        }
        for (i, (&eps, &mu)) in self.eps_r.iter().zip(&self.mu_r).enumerate() {
            if self.pec[i] {
                continue;
            }
            if eps.re < 1.0 {
                return Err(FitError::InvalidArgument(format!(
                    "cell {i}: Re(eps_r) = {} < 1",
                    eps.re
                )));
            }
            if mu.norm() == 0.0 {
                return Err(FitError::InvalidArgument(format!("cell {i}: mu_r = 0")));
            }
            if self.sigma[i] < 0.0 {
                return Err(FitError::InvalidArgument(format!("cell {i}: negative sigma")));
            }
        }
        Ok(())
    }

    /// Absolute complex permittivity `eps0 eps_r - j sigma / omega`.
    fn permittivity(&self, c: [usize; 3], omega: Option<f64>) -> Complex64 {
        let i = self.cell(c);
        let mut eps = self.eps_r[i] * EPS0;
        if self.sigma[i] != 0.0 {
            let omega = omega.expect("conductive cells need a frequency");
            eps -= Complex64::new(0.0, self.sigma[i] / omega);
        }
        eps
    }
}

/// Cells adjacent to a node plane along one axis, with their half extents.
fn adjacent(grid: &Grid, axis: Axis, n: usize) -> impl Iterator<Item = (usize, f64)> {
    let (lo, hi) = grid.half_extents(axis, n);
    let below = (n > 0).then(|| (n - 1, lo));
    let above = (hi > 0.0).then_some((n, hi));
    below.into_iter().chain(above)
}

/// Diagonal of `M_eps`: `eps_avg * Ã / L` with `eps_avg` the area-weighted
/// mean over the (up to four) cells the dual facet crosses. Degenerate
/// edges get zero. `omega` is needed only for conductive scenes.
pub fn average_permittivity(grid: &Grid, map: &MaterialMap, omega: Option<f64>) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); grid.n_edges()];
    for n in grid.iter_nodes() {
        for u in Axis::ALL {
            if grid.edge_is_degenerate(u, n) {
                continue;
            }
            let (v, w) = u.others();
            let mut acc = Complex64::new(0.0, 0.0);
            for (cv, hv) in adjacent(grid, v, n[v.index()]) {
                for (cw, hw) in adjacent(grid, w, n[w.index()]) {
                    let mut c = [0usize; 3];
                    c[u.index()] = n[u.index()];
                    c[v.index()] = cv;
                    c[w.index()] = cw;
                    acc += map.permittivity(c, omega) * (hv * hw);
                }
            }
            out[grid.edge((n, u))] = acc / grid.primal_edge_len(u, n);
        }
    }
    out
}

/// Diagonal of `M_mu^{-1}`: `L̃ / (mu_avg A)` with `mu_avg` the
/// length-weighted mean along the two dual half edges. Degenerate facets
/// get zero.
pub fn average_permeability(grid: &Grid, map: &MaterialMap) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); grid.n_edges()];
    for n in grid.iter_nodes() {
        for w in Axis::ALL {
            if grid.facet_is_degenerate(w, n) {
                continue;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            let mut len = 0.0;
            for (cw, h) in adjacent(grid, w, n[w.index()]) {
                let mut c = n;
                c[w.index()] = cw;
                acc += map.mu_r[map.cell(c)] * (MU0 * h);
                len += h;
            }
            let area = grid.primal_facet_area(w, n);
            out[grid.edge((n, w))] = Complex64::new(len * len, 0.0) / (acc * area);
        }
    }
    out
}

/// Diagonals entering the symmetrized system.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialDiagonals {
    /// `M_eps^{-1/2}` per edge, zero on masked edges.
    pub inv_sqrt_eps: Vec<Complex64>,
    /// `M_mu^{-1/2}` per facet, zero on degenerate facets.
    pub inv_sqrt_mu: Vec<Complex64>,
    /// `true` where the edge unknown is eliminated.
    pub edge_mask: Vec<bool>,
}

impl MaterialDiagonals {
    /// Raw diagonals from averaged material matrices, before masking.
    pub fn from_averages(m_eps: &[Complex64], m_mu_inv: &[Complex64]) -> MaterialDiagonals {
        let inv_sqrt_eps = m_eps
            .iter()
            .map(|&e| {
                if e.norm() == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(1.0, 0.0) / e.sqrt()
                }
            })
            .collect();
        let inv_sqrt_mu = m_mu_inv.iter().map(|&m| m.sqrt()).collect();
        let edge_mask = m_eps.iter().map(|e| e.norm() == 0.0).collect();
        MaterialDiagonals {
            inv_sqrt_eps,
            inv_sqrt_mu,
            edge_mask,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.inv_sqrt_eps.len()
    }

    pub fn n_masked(&self) -> usize {
        self.edge_mask.iter().filter(|&&m| m).count()
    }

    pub fn is_real(&self) -> bool {
        self.inv_sqrt_eps.iter().chain(&self.inv_sqrt_mu).all(|z| z.im == 0.0)
    }

    pub fn inv_sqrt_eps_as<S: Scalar>(&self) -> Vec<S> {
        self.inv_sqrt_eps.iter().map(|&z| S::from_complex(z)).collect()
    }

    pub fn inv_mu_as<S: Scalar>(&self) -> Vec<S> {
        self.inv_sqrt_mu.iter().map(|&z| S::from_complex(z * z)).collect()
    }
}

/// Averages both material matrices, masks, and returns the diagonals.
pub fn build_diagonals(
    grid: &Grid,
    map: &MaterialMap,
    walls: &Walls,
    omega: Option<f64>,
) -> Result<MaterialDiagonals> {
    map.validate(grid)?;
    if omega.is_none() && map.is_conductive() {
        return Err(FitError::InvalidArgument("conductive materials need a frequency".into()));
    }
    let m_eps = average_permittivity(grid, map, omega);
    let m_mu_inv = average_permeability(grid, map);
    let diag = MaterialDiagonals::from_averages(&m_eps, &m_mu_inv);
    Ok(apply_boundary_mask(diag, grid, map, walls))
}

/// Mask of eliminated edges; depends only on geometry, not on frequency.
pub fn edge_mask(grid: &Grid, map: &MaterialMap, walls: &Walls) -> Vec<bool> {
    let n = grid.n_edges();
    let one = Complex64::new(1.0, 0.0);
    let mut m_eps = vec![one; n];
    for (e, v) in m_eps.iter_mut().enumerate() {
        let (node, axis) = grid.decompose(e);
        if grid.edge_is_degenerate(axis, node) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    let diag = MaterialDiagonals::from_averages(&m_eps, &vec![one; n]);
    apply_boundary_mask(diag, grid, map, walls).edge_mask
}

/// Masks degenerate edges, edges tangential to PEC walls, and edges lying on
/// PEC cells or sheets. PMC walls are the natural boundary and need nothing.
pub fn apply_boundary_mask(
    mut diag: MaterialDiagonals,
    grid: &Grid,
    map: &MaterialMap,
    walls: &Walls,
) -> MaterialDiagonals {
    let nodes = grid.nodes();
    let cells = grid.cells();
    for n in grid.iter_nodes() {
        for u in Axis::ALL {
            let e = grid.edge((n, u));
            let masked = grid.edge_is_degenerate(u, n) || {
                let on_pec_wall = Axis::ALL.iter().any(|&a| {
                    a != u
                        && ((n[a.index()] == 0 && walls.lo[a.index()] == Boundary::Pec)
                            || (n[a.index()] + 1 == nodes[a.index()]
                                && walls.hi[a.index()] == Boundary::Pec))
                });
                on_pec_wall || touches_pec(grid, map, n, u, cells)
            };
            if masked {
                diag.edge_mask[e] = true;
            }
            if diag.edge_mask[e] {
                diag.inv_sqrt_eps[e] = Complex64::new(0.0, 0.0);
            }
        }
    }
    diag
}

fn touches_pec(grid: &Grid, map: &MaterialMap, n: [usize; 3], u: Axis, cells: [usize; 3]) -> bool {
    let (v, w) = u.others();
    let tip = grid.step(n, u).expect("non-degenerate edge");
    if map.pec_sheets.iter().any(|b| b.contains(n) && b.contains(tip)) {
        return true;
    }
    let range = |a: Axis| {
        let k = n[a.index()];
        let lo = k.saturating_sub(1);
        let hi = k.min(cells[a.index()] - 1);
        lo..=hi
    };
    for cv in range(v) {
        for cw in range(w) {
            let mut c = [0usize; 3];
            c[u.index()] = n[u.index()];
            c[v.index()] = cv;
            c[w.index()] = cw;
            if map.is_pec(c) {
                return true;
            }
        }
    }
    false
}

/// Overwrites the curl values with `M_mu^{-1/2} C M_eps^{-1/2}` (row scaling by
/// `inv_sqrt_mu`, column scaling by `inv_sqrt_eps`), keeping the pattern.
/// Returns the scaled operator and the number of multiplications spent.
pub fn scale_curl<S: Scalar>(
    curl: SparseOperator<f64>,
    diag: &MaterialDiagonals,
) -> (SparseOperator<S>, u64) {
    let mults = 2 * curl.nnz() as u64;
    let row = diag.inv_sqrt_mu_as::<S>();
    let col = diag.inv_sqrt_eps_as::<S>();
    let op = curl.map_values(|r, c, v| row[r].scale(v) * col[c]);
    (op, mults)
}

impl MaterialDiagonals {
    pub fn inv_sqrt_mu_as<S: Scalar>(&self) -> Vec<S> {
        self.inv_sqrt_mu.iter().map(|&z| S::from_complex(z)).collect()
    }
}
