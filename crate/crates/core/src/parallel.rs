//! z-slice work partitioning and a deterministic execution context.
//!
//! Unknowns of one z-layer of nodes form a contiguous index range, so a
//! partition of the layers is a partition of the unknowns. Row-wise kernels
//! run over these ranges; reductions always use a fixed block size that is
//! independent of the worker count, so results are bitwise reproducible
//! for any number of workers.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::grid::Grid;
use crate::scalar::Scalar;

/// Block length for reductions and element-wise kernels.
pub const REDUCTION_BLOCK: usize = 4096;

/// Contiguous per-worker ranges of node layers along z.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlicePlan {
    pub layer_ranges: Vec<Range<usize>>,
    pub index_ranges: Vec<Range<usize>>,
    pub layer_len: usize,
    pub n_layers: usize,
}

/// Splits `n_layers` layers into `n_workers` contiguous ranges whose sizes
/// differ by at most one. Surplus workers receive empty ranges.
pub fn plan_layers(n_layers: usize, n_workers: usize) -> Vec<Range<usize>> {
    let n_workers = n_workers.max(1);
    let base = n_layers / n_workers;
    let extra = n_layers % n_workers;
    let mut start = 0;
    (0..n_workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Partitions the node layers of `grid` among `n_workers`.
pub fn plan_slices(grid: &Grid, n_workers: usize) -> SlicePlan {
    let n_layers = grid.nodes()[2];
    let layer_len = grid.layer_len();
    let layer_ranges = plan_layers(n_layers, n_workers);
    let index_ranges = layer_ranges
        .iter()
        .map(|r| r.start * layer_len..r.end * layer_len)
        .collect();
    SlicePlan {
        layer_ranges,
        index_ranges,
        layer_len,
        n_layers,
    }
}

impl SlicePlan {
    /// Plan over a plain index space without layer structure.
    pub fn flat(n: usize, n_workers: usize) -> SlicePlan {
        let index_ranges = plan_layers(n, n_workers);
        SlicePlan {
            layer_ranges: index_ranges.clone(),
            index_ranges,
            layer_len: 1,
            n_layers: n,
        }
    }

    pub fn n_workers(&self) -> usize {
        self.layer_ranges.len()
    }

    /// Unknown range a worker may read: its own layers plus one halo
    /// layer on each side.
    pub fn halo_index_range(&self, worker: usize) -> Range<usize> {
        let r = &self.layer_ranges[worker];
        if r.is_empty() {
            return r.start * self.layer_len..r.start * self.layer_len;
        }
        let lo = r.start.saturating_sub(1);
        let hi = (r.end + 1).min(self.n_layers);
        lo * self.layer_len..hi * self.layer_len
    }
}

/// Thread pool handle plus worker count. `workers == 1` (or a platform
/// without threads) runs everything inline.
#[derive(Clone)]
pub struct Executor {
    pool: Option<Arc<ThreadPool>>,
    workers: usize,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("workers", &self.workers)
            .field("threaded", &self.pool.is_some())
            .finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::sequential()
    }
}

impl Executor {
    pub fn sequential() -> Executor {
        Executor {
            pool: None,
            workers: 1,
        }
    }

    pub fn new(workers: usize) -> Executor {
        let workers = workers.max(1);
        if workers == 1 {
            return Executor::sequential();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => Executor {
                pool: Some(Arc::new(pool)),
                workers,
            },
            Err(_) => Executor::sequential(),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Runs `f(range, out_chunk)` for every range; `ranges` must tile
    /// `0..out.len()` in order.
    pub fn for_ranges<T, F>(&self, ranges: &[Range<usize>], out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(Range<usize>, &mut [T]) + Sync,
    {
        debug_assert_eq!(ranges.last().map_or(0, |r| r.end), out.len());
        match &self.pool {
            None => {
                for r in ranges {
                    let chunk = &mut out[r.clone()];
                    f(r.clone(), chunk);
                }
            }
            Some(pool) => {
                let mut chunks = Vec::with_capacity(ranges.len());
                let mut rest = out;
                for r in ranges {
                    let (head, tail) = rest.split_at_mut(r.len());
                    chunks.push((r.clone(), head));
                    rest = tail;
                }
                pool.install(|| {
                    chunks
                        .into_par_iter()
                        .for_each(|(r, chunk)| f(r, chunk));
                });
            }
        }
    }

    /// Element-wise kernel over fixed blocks: `f(offset, chunk)`.
    pub fn for_blocks<T, F>(&self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync,
    {
        match &self.pool {
            Some(pool) if out.len() > REDUCTION_BLOCK => pool.install(|| {
                out.par_chunks_mut(REDUCTION_BLOCK)
                    .enumerate()
                    .for_each(|(b, chunk)| f(b * REDUCTION_BLOCK, chunk));
            }),
            _ => {
                for (b, chunk) in out.chunks_mut(REDUCTION_BLOCK).enumerate() {
                    f(b * REDUCTION_BLOCK, chunk);
                }
            }
        }
    }

    /// Deterministic sum of `f(block_range)` over fixed blocks of `0..n`,
    /// combined sequentially in block order.
    pub fn reduce_blocks<S, F>(&self, n: usize, f: F) -> S
    where
        S: Scalar,
        F: Fn(Range<usize>) -> S + Sync,
    {
        let n_blocks = n.div_ceil(REDUCTION_BLOCK);
        let block = |b: usize| b * REDUCTION_BLOCK..((b + 1) * REDUCTION_BLOCK).min(n);
        match &self.pool {
            Some(pool) if n_blocks > 1 => {
                let partial: Vec<S> =
                    pool.install(|| (0..n_blocks).into_par_iter().map(|b| f(block(b))).collect());
                partial.into_iter().fold(S::zero(), |acc, p| acc + p)
            }
            _ => (0..n_blocks).fold(S::zero(), |acc, b| acc + f(block(b))),
        }
    }

    /// Unconjugated bilinear form `Σ a_i b_i`.
    pub fn dotu<S: Scalar>(&self, a: &[S], b: &[S]) -> S {
        debug_assert_eq!(a.len(), b.len());
        self.reduce_blocks(a.len(), |r| {
            a[r.clone()]
                .iter()
                .zip(&b[r])
                .fold(S::zero(), |acc, (&x, &y)| acc + x * y)
        })
    }

    /// Hermitian inner product `Σ conj(a_i) b_i`.
    pub fn dotc<S: Scalar>(&self, a: &[S], b: &[S]) -> S {
        debug_assert_eq!(a.len(), b.len());
        self.reduce_blocks(a.len(), |r| {
            a[r.clone()]
                .iter()
                .zip(&b[r])
                .fold(S::zero(), |acc, (&x, &y)| acc + x.conj() * y)
        })
    }

    pub fn norm2<S: Scalar>(&self, a: &[S]) -> f64 {
        let s: f64 = self.reduce_blocks(a.len(), |r| {
            a[r].iter().fold(0.0, |acc, &x| acc + x.abs_sq())
        });
        s.sqrt()
    }

    /// `y += alpha * x`
    pub fn axpy<S: Scalar>(&self, alpha: S, x: &[S], y: &mut [S]) {
        self.for_blocks(y, |off, chunk| {
            let len = chunk.len();
            for (yi, &xi) in chunk.iter_mut().zip(&x[off..off + len]) {
                *yi += alpha * xi;
            }
        });
    }

    /// `y = x + beta * y`
    pub fn xpby<S: Scalar>(&self, x: &[S], beta: S, y: &mut [S]) {
        self.for_blocks(y, |off, chunk| {
            let len = chunk.len();
            for (yi, &xi) in chunk.iter_mut().zip(&x[off..off + len]) {
                *yi = xi + beta * *yi;
            }
        });
    }

    pub fn copy<S: Scalar>(&self, x: &[S], y: &mut [S]) {
        self.for_blocks(y, |off, chunk| chunk.copy_from_slice(&x[off..off + chunk.len()]));
    }

    pub fn fill<S: Scalar>(&self, y: &mut [S], value: S) {
        self.for_blocks(y, |_, chunk| chunk.fill(value));
    }
}
