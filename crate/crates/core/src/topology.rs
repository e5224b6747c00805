//! Discrete curl and gradient incidence matrices in CSR form.

use std::io::Write;
use std::ops::{Mul, Range};

use crate::error::{FitError, Result};
use crate::grid::{Axis, Grid};
use crate::parallel::Executor;
use crate::scalar::Scalar;

/// CSR matrix with 32-bit row pointers and column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> SparseOperator<T> {
    /// Assembles from per-row `(column, value)` lists. Columns within a row
    /// are sorted; duplicates are rejected.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let nnz: usize = rows.iter().map(Vec::len).sum();
        if nnz >= u32::MAX as usize || n_cols >= u32::MAX as usize {
            return Err(FitError::TooLarge(format!(
                "{nnz} nonzeros exceed the 32-bit index range"
            )));
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0u32);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(FitError::InvalidArgument(format!(
                        "duplicate column {} in row {r}",
                        w[0].0
                    )));
                }
            }
            for (c, v) in row {
                if c >= n_cols {
                    return Err(FitError::DimensionMismatch {
                        expected: n_cols,
                        got: c + 1,
                    });
                }
                col_idx.push(c as u32);
                values.push(v);
            }
            row_ptr.push(col_idx.len() as u32);
        }
        Ok(SparseOperator {
            n_rows: row_ptr.len() - 1,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[T]) {
        let a = self.row_ptr[r] as usize;
        let b = self.row_ptr[r + 1] as usize;
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        (self.row_ptr[r + 1] - self.row_ptr[r]) as usize
    }

    /// Bytes held by the three CSR arrays.
    pub fn memory_bytes(&self) -> usize {
        4 * self.row_ptr.len() + 4 * self.col_idx.len() + std::mem::size_of::<T>() * self.values.len()
    }

    /// Applies `f(row, col, value)` to every stored value, keeping the pattern.
    pub fn map_values<U: Scalar>(self, f: impl Fn(usize, usize, T) -> U) -> SparseOperator<U> {
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.n_rows {
            let a = self.row_ptr[r] as usize;
            let b = self.row_ptr[r + 1] as usize;
            for p in a..b {
                values.push(f(r, self.col_idx[p] as usize, self.values[p]));
            }
        }
        SparseOperator {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr,
            col_idx: self.col_idx,
            values,
        }
    }

    /// Row-wise product `Σ_j a_rj x_j` in stored column order.
    #[inline]
    pub fn row_dot<S>(&self, r: usize, x: &[S]) -> S
    where
        S: Scalar + Mul<T, Output = S>,
    {
        let a = self.row_ptr[r] as usize;
        let b = self.row_ptr[r + 1] as usize;
        let mut acc = S::zero();
        for p in a..b {
            acc += x[self.col_idx[p] as usize] * self.values[p];
        }
        acc
    }

    /// `y = op · x`.
    pub fn spmv<S>(&self, x: &[S], y: &mut [S]) -> Result<()>
    where
        S: Scalar + Mul<T, Output = S>,
    {
        self.check_dims(x.len(), y.len())?;
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row_dot(r, x);
        }
        Ok(())
    }

    /// `y = op · x` with rows split over `ranges` on `exec`.
    pub fn spmv_par<S>(
        &self,
        x: &[S],
        y: &mut [S],
        exec: &Executor,
        ranges: &[Range<usize>],
    ) -> Result<()>
    where
        S: Scalar + Mul<T, Output = S>,
    {
        self.check_dims(x.len(), y.len())?;
        exec.for_ranges(ranges, y, |range, chunk| {
            for (yr, r) in chunk.iter_mut().zip(range) {
                *yr = self.row_dot(r, x);
            }
        });
        Ok(())
    }

    /// `y = opᵀ · x` by scattering row contributions in row order.
    pub fn spmv_transpose<S>(&self, x: &[S], y: &mut [S]) -> Result<()>
    where
        S: Scalar + Mul<T, Output = S>,
    {
        if x.len() != self.n_rows {
            return Err(FitError::DimensionMismatch {
                expected: self.n_rows,
                got: x.len(),
            });
        }
        if y.len() != self.n_cols {
            return Err(FitError::DimensionMismatch {
                expected: self.n_cols,
                got: y.len(),
            });
        }
        y.fill(S::zero());
        for (r, &xr) in x.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c as usize] += xr * v;
            }
        }
        Ok(())
    }

    /// Explicit CSR transpose (columns stay sorted within each row).
    pub fn transpose(&self) -> SparseOperator<T> {
        let mut counts = vec![0u32; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c as usize] as usize;
                col_idx[slot] = r as u32;
                values[slot] = v;
                next[c as usize] += 1;
            }
        }
        SparseOperator {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c as usize] = v;
            }
        }
        d
    }

    /// Writes Matrix Market coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        let field = if T::IS_COMPLEX { "complex" } else { "real" };
        writeln!(w, "%%MatrixMarket matrix coordinate {field} general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let z = v.to_complex();
                if T::IS_COMPLEX {
                    writeln!(w, "{} {} {:e} {:e}", r + 1, c + 1, z.re, z.im)?;
                } else {
                    writeln!(w, "{} {} {:e}", r + 1, c + 1, z.re)?;
                }
            }
        }
        Ok(())
    }

    fn check_dims(&self, xlen: usize, ylen: usize) -> Result<()> {
        if xlen != self.n_cols {
            return Err(FitError::DimensionMismatch {
                expected: self.n_cols,
                got: xlen,
            });
        }
        if ylen != self.n_rows {
            return Err(FitError::DimensionMismatch {
                expected: self.n_rows,
                got: ylen,
            });
        }
        Ok(())
    }
}

/// Discrete curl `C`: rows are primal facets, columns primal edges, both in
/// interleaved order. The facet with normal `w` at node `n` circulates
/// `+e_u(n) + e_v(n+u) - e_u(n+v) - e_v(n)` with `(u, v, w)` right-handed;
/// edges past the maximal planes are dropped from the loop.
pub fn build_curl(grid: &Grid) -> SparseOperator<f64> {
    let n_e = grid.n_edges();
    let mut row_ptr = Vec::with_capacity(n_e + 1);
    let mut col_idx = Vec::with_capacity(4 * n_e);
    let mut values = Vec::with_capacity(4 * n_e);
    row_ptr.push(0u32);
    let mut entries: Vec<(u32, f64)> = Vec::with_capacity(4);
    for n in grid.iter_nodes() {
        for w in Axis::ALL {
            let (u, v) = w.others();
            entries.clear();
            entries.push((grid.edge((n, u)) as u32, 1.0));
            entries.push((grid.edge((n, v)) as u32, -1.0));
            if let Some(nu) = grid.step(n, u) {
                entries.push((grid.edge((nu, v)) as u32, 1.0));
            }
            if let Some(nv) = grid.step(n, v) {
                entries.push((grid.edge((nv, u)) as u32, -1.0));
            }
            entries.sort_by_key(|e| e.0);
            for &(c, val) in &entries {
                col_idx.push(c);
                values.push(val);
            }
            row_ptr.push(col_idx.len() as u32);
        }
    }
    SparseOperator {
        n_rows: n_e,
        n_cols: n_e,
        row_ptr,
        col_idx,
        values,
    }
}

/// Discrete gradient `G` (`n_e × N_p`): `+φ(head) - φ(tail)` per edge, with
/// only `-φ(tail)` on degenerate edges.
pub fn build_gradient(grid: &Grid) -> SparseOperator<f64> {
    let n_e = grid.n_edges();
    let mut row_ptr = Vec::with_capacity(n_e + 1);
    let mut col_idx = Vec::with_capacity(2 * n_e);
    let mut values = Vec::with_capacity(2 * n_e);
    row_ptr.push(0u32);
    for n in grid.iter_nodes() {
        let tail = grid.node_index(n) as u32;
        for a in Axis::ALL {
            col_idx.push(tail);
            values.push(-1.0);
            if let Some(h) = grid.step(n, a) {
                col_idx.push(grid.node_index(h) as u32);
                values.push(1.0);
            }
            row_ptr.push(col_idx.len() as u32);
        }
    }
    SparseOperator {
        n_rows: n_e,
        n_cols: grid.n_nodes(),
        row_ptr,
        col_idx,
        values,
    }
}
