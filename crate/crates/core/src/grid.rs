//! Structured non-equidistant primal/dual grid pair.
//!
//! Primal nodes sit at the intersections of the coordinate planes; dual nodes
//! sit at primal cell barycenters. Every primal node `(i, j, k)` owns three
//! edges (and three facets) pointing in `+x`, `+y` and `+z`. Edges and facets
//! that would leave the domain at the maximal planes are kept in the index
//! space as degenerate entries with zero metric, so the unknown count is
//! always `3 * Nx * Ny * Nz`.
//!
//! Unknowns are interleaved: `index = 3 * (i + Nx*j + Nx*Ny*k) + axis`.

use crate::error::{FitError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Axis {
        match i {
            0 => Axis::X,
            1 => Axis::Y,
            2 => Axis::Z,
            _ => panic!("axis index {i} out of range"),
        }
    }

    /// The two remaining axes in cyclic order, `(u, v)` with `self = u × v`.
    #[inline]
    pub fn others(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    planes: [Vec<f64>; 3],
    nodes: [usize; 3],
}

impl Grid {
    /// Builds the grid pair from explicit plane coordinates (meters).
    pub fn new(x_planes: Vec<f64>, y_planes: Vec<f64>, z_planes: Vec<f64>) -> Result<Grid> {
        let planes = [x_planes, y_planes, z_planes];
        for (axis, p) in Axis::ALL.iter().zip(&planes) {
            if p.len() < 2 {
                return Err(FitError::InvalidGrid(format!(
                    "{}-planes need at least 2 entries, got {}",
                    axis.name(),
                    p.len()
                )));
            }
            if let Some(bad) = p.iter().position(|v| !v.is_finite()) {
                return Err(FitError::InvalidGrid(format!(
                    "{}-plane {bad} is not finite",
                    axis.name()
                )));
            }
            if let Some(w) = p.windows(2).position(|w| w[1] <= w[0]) {
                return Err(FitError::InvalidGrid(format!(
                    "{}-planes not strictly increasing at index {}: {} >= {}",
                    axis.name(),
                    w + 1,
                    p[w],
                    p[w + 1]
                )));
            }
        }
        let nodes = [planes[0].len(), planes[1].len(), planes[2].len()];
        let n_edges = 3u128 * nodes.iter().map(|&n| n as u128).product::<u128>();
        if n_edges >= 1u128 << 31 {
            return Err(FitError::TooLarge(format!(
                "{n_edges} unknowns exceed the 32-bit index range"
            )));
        }
        Ok(Grid { planes, nodes })
    }

    /// Uniform grid with `cells` cells per axis spanning `[0, extent]`.
    pub fn uniform(extent: [f64; 3], cells: [usize; 3]) -> Result<Grid> {
        let axis = |a: usize| -> Vec<f64> {
            let n = cells[a];
            (0..=n).map(|i| extent[a] * i as f64 / n as f64).collect()
        };
        if cells.contains(&0) {
            return Err(FitError::InvalidGrid("zero cell count".into()));
        }
        Grid::new(axis(0), axis(1), axis(2))
    }

    pub fn planes(&self, axis: Axis) -> &[f64] {
        &self.planes[axis.index()]
    }

    /// Node counts `[Nx, Ny, Nz]`.
    #[inline]
    pub fn nodes(&self) -> [usize; 3] {
        self.nodes
    }

    /// Cell counts `[nx, ny, nz]`.
    #[inline]
    pub fn cells(&self) -> [usize; 3] {
        [self.nodes[0] - 1, self.nodes[1] - 1, self.nodes[2] - 1]
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nodes[0] * self.nodes[1] * self.nodes[2]
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.cells().iter().product()
    }

    /// Number of edge unknowns `n_e = 3 N_p`.
    #[inline]
    pub fn n_edges(&self) -> usize {
        3 * self.n_nodes()
    }

    /// Unknowns per z-layer of nodes.
    #[inline]
    pub fn layer_len(&self) -> usize {
        3 * self.nodes[0] * self.nodes[1]
    }

    #[inline]
    pub fn node_index(&self, n: [usize; 3]) -> usize {
        n[0] + self.nodes[0] * (n[1] + self.nodes[1] * n[2])
    }

    #[inline]
    pub fn node_coords(&self, node: usize) -> [usize; 3] {
        let i = node % self.nodes[0];
        let r = node / self.nodes[0];
        [i, r % self.nodes[1], r / self.nodes[1]]
    }

    #[inline]
    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        let cells = self.cells();
        c[0] + cells[0] * (c[1] + cells[1] * c[2])
    }

    /// Interleaved edge index with bounds checking.
    pub fn edge_index(&self, i: usize, j: usize, k: usize, axis: Axis) -> Result<usize> {
        if i >= self.nodes[0] || j >= self.nodes[1] || k >= self.nodes[2] {
            return Err(FitError::NodeOutOfRange {
                i,
                j,
                k,
                nodes: self.nodes,
            });
        }
        Ok(self.edge(([i, j, k], axis)))
    }

    /// Interleaved index of the edge (or facet) attached to `node` along `axis`.
    #[inline]
    pub fn edge(&self, (node, axis): ([usize; 3], Axis)) -> usize {
        3 * self.node_index(node) + axis.index()
    }

    #[inline]
    pub fn decompose(&self, index: usize) -> ([usize; 3], Axis) {
        (self.node_coords(index / 3), Axis::from_index(index % 3))
    }

    /// Node one step further along `axis`, if it exists.
    #[inline]
    pub fn step(&self, mut n: [usize; 3], axis: Axis) -> Option<[usize; 3]> {
        let a = axis.index();
        if n[a] + 1 < self.nodes[a] {
            n[a] += 1;
            Some(n)
        } else {
            None
        }
    }

    /// Extent of primal cell `c` along `axis`.
    #[inline]
    pub fn spacing(&self, axis: Axis, c: usize) -> f64 {
        let p = &self.planes[axis.index()];
        p[c + 1] - p[c]
    }

    /// An edge along `axis` is degenerate when it starts on the maximal plane.
    #[inline]
    pub fn edge_is_degenerate(&self, axis: Axis, n: [usize; 3]) -> bool {
        n[axis.index()] + 1 >= self.nodes[axis.index()]
    }

    /// A facet with normal `axis` is degenerate when either spanning edge is.
    #[inline]
    pub fn facet_is_degenerate(&self, axis: Axis, n: [usize; 3]) -> bool {
        let (u, v) = axis.others();
        self.edge_is_degenerate(u, n) || self.edge_is_degenerate(v, n)
    }

    /// Primal edge length `L_n`; zero for degenerate edges.
    pub fn primal_edge_len(&self, axis: Axis, n: [usize; 3]) -> f64 {
        if self.edge_is_degenerate(axis, n) {
            0.0
        } else {
            self.spacing(axis, n[axis.index()])
        }
    }

    /// Primal facet area `A_n`; zero for degenerate facets.
    pub fn primal_facet_area(&self, axis: Axis, n: [usize; 3]) -> f64 {
        let (u, v) = axis.others();
        self.primal_edge_len(u, n) * self.primal_edge_len(v, n)
    }

    /// Half extents of the (up to two) cells adjacent to node plane
    /// `n` along `axis`: `(below, above)`, zero where no cell exists.
    #[inline]
    pub fn half_extents(&self, axis: Axis, n: usize) -> (f64, f64) {
        let below = if n > 0 {
            0.5 * self.spacing(axis, n - 1)
        } else {
            0.0
        };
        let above = if n + 1 < self.nodes[axis.index()] {
            0.5 * self.spacing(axis, n)
        } else {
            0.0
        };
        (below, above)
    }

    /// Dual edge length `L̃_n` crossing the facet with normal `axis` at
    /// node `n`: the half-sum of the adjacent cell extents.
    pub fn dual_edge_len(&self, axis: Axis, n: [usize; 3]) -> f64 {
        let (lo, hi) = self.half_extents(axis, n[axis.index()]);
        lo + hi
    }

    /// Dual facet area `Ã_n` pierced by the edge along `axis` at node `n`.
    pub fn dual_facet_area(&self, axis: Axis, n: [usize; 3]) -> f64 {
        let (u, v) = axis.others();
        self.dual_edge_len(u, n) * self.dual_edge_len(v, n)
    }

    pub fn cell_volume(&self, c: [usize; 3]) -> f64 {
        self.spacing(Axis::X, c[0]) * self.spacing(Axis::Y, c[1]) * self.spacing(Axis::Z, c[2])
    }

    /// `(min, max)` corners of the bounding box.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let lo = [self.planes[0][0], self.planes[1][0], self.planes[2][0]];
        let hi = [
            *self.planes[0].last().unwrap(),
            *self.planes[1].last().unwrap(),
            *self.planes[2].last().unwrap(),
        ];
        (lo, hi)
    }

    /// Index of the plane nearest to `x` along `axis` and the snap distance.
    pub fn snap(&self, axis: Axis, x: f64) -> (usize, f64) {
        let p = &self.planes[axis.index()];
        let pos = p.partition_point(|&v| v < x);
        let mut best = (pos.min(p.len() - 1), f64::INFINITY);
        for cand in pos.saturating_sub(1)..=(pos.min(p.len() - 1)) {
            let d = (p[cand] - x).abs();
            if d < best.1 {
                best = (cand, d);
            }
        }
        best
    }

    /// Iterates all node coordinates in index order (x fastest).
    pub fn iter_nodes(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, nz] = self.nodes;
        (0..nz).flat_map(move |k| (0..ny).flat_map(move |j| (0..nx).map(move |i| [i, j, k])))
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, nz] = self.cells();
        (0..nz).flat_map(move |k| (0..ny).flat_map(move |j| (0..nx).map(move |i| [i, j, k])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_metrics() {
        let g = Grid::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        for a in Axis::ALL {
            assert_eq!(g.primal_edge_len(a, [0, 0, 0]), 1.0);
            assert_eq!(g.dual_edge_len(a, [0, 0, 0]), 0.5);
            assert_eq!(g.dual_edge_len(a, [1, 1, 1]), 0.5);
            assert_eq!(g.primal_facet_area(a, [0, 0, 0]), 1.0);
            assert_eq!(g.dual_facet_area(a, [0, 0, 0]), 0.25);
        }
        assert_eq!(g.primal_edge_len(Axis::X, [1, 0, 0]), 0.0);
        assert!(g.facet_is_degenerate(Axis::Z, [0, 1, 0]));
    }

    #[test]
    fn dual_length_is_barycentric_half_sum() {
        let g = Grid::new(vec![0.0, 1.0, 3.0], vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(g.dual_edge_len(Axis::X, [1, 0, 0]), 1.5);
        assert_eq!(g.dual_edge_len(Axis::X, [0, 0, 0]), 0.5);
        assert_eq!(g.dual_edge_len(Axis::X, [2, 0, 0]), 1.0);
    }

    #[test]
    fn counts_for_15_10_10() {
        let g = Grid::uniform([1.5, 1.0, 1.0], [15, 10, 10]).unwrap();
        assert_eq!(g.n_nodes(), 16 * 11 * 11);
        assert_eq!(g.n_nodes(), 1936);
        assert_eq!(g.n_edges(), 5808);
        assert_eq!(g.iter_nodes().count(), 1936);
    }

    #[test]
    fn edge_index_examples() {
        let g = Grid::uniform([1.0; 3], [2, 3, 4]).unwrap();
        assert_eq!(g.edge_index(0, 0, 0, Axis::X).unwrap(), 0);
        assert_eq!(g.edge_index(0, 0, 0, Axis::Z).unwrap(), 2);
        assert_eq!(g.edge_index(1, 0, 0, Axis::X).unwrap(), 3);
        assert_eq!(g.edge_index(2, 3, 4, Axis::Z).unwrap(), g.n_edges() - 1);
        assert!(matches!(
            g.edge_index(3, 0, 0, Axis::X),
            Err(FitError::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn edge_index_is_a_bijection_with_contiguous_layers() {
        let g = Grid::uniform([1.0; 3], [3, 2, 4]).unwrap();
        let mut seen = vec![false; g.n_edges()];
        for n in g.iter_nodes() {
            for a in Axis::ALL {
                let e = g.edge_index(n[0], n[1], n[2], a).unwrap();
                assert!(!seen[e]);
                seen[e] = true;
                assert_eq!(g.decompose(e), (n, a));
                let layer = e / g.layer_len();
                assert_eq!(layer, n[2]);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn rejects_bad_planes() {
        assert!(Grid::new(vec![0.0], vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
        let err = Grid::new(vec![0.0, 1.0], vec![0.0, 2.0, 1.0], vec![0.0, 1.0]).unwrap_err();
        assert!(err.to_string().contains("y-planes"), "{err}");
        assert!(Grid::new(vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn volumes_sum_to_bounding_box() {
        let g = Grid::new(
            vec![0.0, 0.13, 0.5, 0.51, 1.7],
            vec![-1.0, -0.2, 0.3],
            vec![2.0, 2.25, 3.0, 4.5],
        )
        .unwrap();
        let total: f64 = g.iter_cells().map(|c| g.cell_volume(c)).sum();
        let (lo, hi) = g.bounds();
        let bbox = (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
        assert!(((total - bbox) / bbox).abs() < 1e-14);
    }

    #[test]
    fn snap_picks_nearest_plane() {
        let g = Grid::new(vec![0.0, 1.0, 3.0], vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(g.snap(Axis::X, 1.9), (1, 0.8999999999999999));
        assert_eq!(g.snap(Axis::X, 2.1).0, 2);
        assert_eq!(g.snap(Axis::X, -5.0).0, 0);
        assert_eq!(g.snap(Axis::X, 50.0).0, 2);
    }
}
