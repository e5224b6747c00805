//! The three realizations of `x ↦ (A - omega^2 I) x`.
//!
//! | variant | pipeline | model mults | model bytes |
//! |---------|----------|-------------|-------------|
//! | `E2s`   | assembled `A = 𝒜ᵀ𝒜` (13 nnz per interior row) | `13 n_e` | `164 n_e` |
//! | `E2t`   | `D (Cᵀ (M_mu^{-1} (C (D x)))) - omega^2 x` with `D = M_eps^{-1/2}` | `12 n_e` | `80 n_e` |
//! | `E2tt`  | `𝒜ᵀ (𝒜 x) - omega^2 x` | `9 n_e` | `72 n_e` |
//!
//! Model figures follow the classical cost accounting for the three
//! formulations; the actual multiplication count and allocation are tracked
//! next to them.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{FitError, Result};
use crate::materials::{scale_curl, MaterialDiagonals};
use crate::parallel::{Executor, SlicePlan};
use crate::scalar::Scalar;
use crate::topology::SparseOperator;

/// A linear map on vectors of length `dim()`.
pub trait LinearOperator<S: Scalar> {
    fn dim(&self) -> usize;

    fn apply(&mut self, x: &[S], y: &mut [S]) -> Result<()>;

    /// Model multiplication count consumed so far.
    fn mults(&self) -> u64 {
        0
    }

    fn applies(&self) -> u64 {
        0
    }
}

impl<S: Scalar> LinearOperator<S> for SparseOperator<S> {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&mut self, x: &[S], y: &mut [S]) -> Result<()> {
        self.spmv(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Explicitly assembled symmetric system matrix.
    E2s,
    /// Five-stage shell pipeline around the unscaled curl.
    E2t,
    /// Two-stage shell pipeline around the scaled curl `𝒜`.
    E2tt,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::E2s, Variant::E2t, Variant::E2tt];

    /// Model multiplications per apply, in units of `n_e`.
    pub fn mults_per_unknown(self) -> u64 {
        match self {
            Variant::E2s => 13,
            Variant::E2t => 12,
            Variant::E2tt => 9,
        }
    }

    /// Model memory for operator storage, in bytes per unknown.
    pub fn bytes_per_unknown(self) -> u64 {
        match self {
            // (4 + 8) * 13 + 8
            Variant::E2s => 164,
            // 8 + (4 + 4 + 8) * 4 + 8
            Variant::E2t => 80,
            // (4 + 4 + 8) * 4 + 8
            Variant::E2tt => 72,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::E2s => "e2s",
            Variant::E2t => "e2t",
            Variant::E2tt => "e2tt",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e2s" | "assembled" => Ok(Variant::E2s),
            "e2t" => Ok(Variant::E2t),
            "e2tt" => Ok(Variant::E2tt),
            other => Err(FitError::InvalidArgument(format!(
                "unknown variant '{other}' (expected e2s, e2t or e2tt)"
            ))),
        }
    }
}

/// Diagonal of `A = 𝒜ᵀ𝒜` from one pass over the nonzeros of `𝒜`:
/// `P_ii = Σ_k 𝒜_ki^2` (unconjugated, matching the bilinear form).
pub fn jacobi_diagonal<S: Scalar>(scaled: &SparseOperator<S>) -> Vec<S> {
    let mut p = vec![S::zero(); scaled.n_cols()];
    for (&c, &v) in scaled.col_idx().iter().zip(scaled.values()) {
        p[c as usize] += v * v;
    }
    p
}

/// Explicit `𝒜ᵀ𝒜` in CSR. Exact zeros of `𝒜` (masked edges and degenerate
/// facets) do not enter the pattern, so masked rows and columns are empty.
pub fn assemble_sparse_a<S: Scalar>(scaled: &SparseOperator<S>) -> SparseOperator<S> {
    let at = scaled.transpose();
    let n = scaled.n_cols();
    let mut acc = vec![S::zero(); n];
    let mut marker = vec![usize::MAX; n];
    let mut touched = Vec::with_capacity(16);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        touched.clear();
        let (ks, vs) = at.row(i);
        for (&k, &aki) in ks.iter().zip(vs) {
            if aki.is_zero() {
                continue;
            }
            let (cols, vals) = scaled.row(k as usize);
            for (&j, &akj) in cols.iter().zip(vals) {
                if akj.is_zero() {
                    continue;
                }
                let j = j as usize;
                if marker[j] != i {
                    marker[j] = i;
                    acc[j] = S::zero();
                    touched.push(j);
                }
                acc[j] += aki * akj;
            }
        }
        rows.push(touched.iter().map(|&j| (j, acc[j])).collect());
    }
    SparseOperator::from_rows(n, rows).expect("pattern of 𝒜ᵀ𝒜 fits the index range")
}

/// Frequency-independent operator data, shared between operator clones.
#[derive(Debug)]
pub enum OperatorParts<S> {
    E2s {
        a: SparseOperator<S>,
        inv_sqrt_eps: Vec<S>,
    },
    E2t {
        curl: SparseOperator<f64>,
        curl_t: SparseOperator<f64>,
        inv_sqrt_eps: Vec<S>,
        inv_mu: Vec<S>,
    },
    E2tt {
        a: SparseOperator<S>,
        a_t: SparseOperator<S>,
    },
}

/// Operator data plus the preconditioner diagonal and construction cost.
#[derive(Debug)]
pub struct OperatorSetup<S> {
    pub variant: Variant,
    pub parts: OperatorParts<S>,
    /// `P_ii = Σ_k 𝒜_ki^2`.
    pub jacobi: Vec<S>,
    pub edge_mask: Vec<bool>,
    pub construction_mults: u64,
}

impl<S: Scalar> OperatorSetup<S> {
    /// Builds everything that does not depend on the frequency. The curl is
    /// consumed; for the `𝒜`-based variants its value array is rescaled.
    pub fn build(variant: Variant, curl: SparseOperator<f64>, diag: &MaterialDiagonals) -> Result<Self> {
        if curl.n_rows() != diag.n_edges() || curl.n_cols() != diag.n_edges() {
            return Err(FitError::DimensionMismatch {
                expected: diag.n_edges(),
                got: curl.n_rows(),
            });
        }
        let edge_mask = diag.edge_mask.clone();
        let (parts, jacobi, construction_mults) = match variant {
            Variant::E2t => {
                // the diagonal still comes from the scaled values, without keeping them
                let jacobi = jacobi_from_curl::<S>(&curl, diag);
                let curl_t = curl.transpose();
                let parts = OperatorParts::E2t {
                    curl,
                    curl_t,
                    inv_sqrt_eps: diag.inv_sqrt_eps_as(),
                    inv_mu: diag.inv_mu_as(),
                };
                (parts, jacobi, 0)
            }
            Variant::E2tt => {
                let (a, mults) = scale_curl::<S>(curl, diag);
                let jacobi = jacobi_diagonal(&a);
                let a_t = a.transpose();
                (OperatorParts::E2tt { a, a_t }, jacobi, mults)
            }
            Variant::E2s => {
                let (scaled, mults) = scale_curl::<S>(curl, diag);
                let jacobi = jacobi_diagonal(&scaled);
                let a = assemble_sparse_a(&scaled);
                let parts = OperatorParts::E2s {
                    a,
                    inv_sqrt_eps: diag.inv_sqrt_eps_as(),
                };
                (parts, jacobi, mults)
            }
        };
        Ok(OperatorSetup {
            variant,
            parts,
            jacobi,
            edge_mask,
            construction_mults,
        })
    }

    pub fn n_e(&self) -> usize {
        self.jacobi.len()
    }

    fn storage_bytes(&self) -> usize {
        let vec = |v: &Vec<S>| v.len() * std::mem::size_of::<S>();
        match &self.parts {
            OperatorParts::E2s { a, inv_sqrt_eps } => a.memory_bytes() + vec(inv_sqrt_eps),
            OperatorParts::E2t {
                curl,
                curl_t,
                inv_sqrt_eps,
                inv_mu,
            } => curl.memory_bytes() + curl_t.memory_bytes() + vec(inv_sqrt_eps) + vec(inv_mu),
            OperatorParts::E2tt { a, a_t } => a.memory_bytes() + a_t.memory_bytes(),
        }
    }

    fn actual_mults_per_apply(&self) -> u64 {
        let n = self.n_e() as u64;
        match &self.parts {
            OperatorParts::E2s { a, .. } => a.nnz() as u64 + n,
            OperatorParts::E2t { curl, .. } => 4 * n + 2 * curl.nnz() as u64,
            OperatorParts::E2tt { a, .. } => 2 * a.nnz() as u64 + n,
        }
    }
}

fn jacobi_from_curl<S: Scalar>(curl: &SparseOperator<f64>, diag: &MaterialDiagonals) -> Vec<S> {
    let mu = diag.inv_sqrt_mu_as::<S>();
    let eps = diag.inv_sqrt_eps_as::<S>();
    let mut p = vec![S::zero(); curl.n_cols()];
    for r in 0..curl.n_rows() {
        let (cols, vals) = curl.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            let a = mu[r].scale(v) * eps[c as usize];
            p[c as usize] += a * a;
        }
    }
    p
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub applies: u64,
    /// Model multiplications (variant constant × `n_e` per apply).
    pub mults: u64,
    /// Multiplications actually executed.
    pub actual_mults: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorStats {
    pub variant: Variant,
    pub n_e: usize,
    pub mults_per_apply: u64,
    pub actual_mults_per_apply: u64,
    pub memory_bytes: u64,
    pub actual_memory_bytes: u64,
    pub scratch_bytes: u64,
    pub scratch_vectors: usize,
    pub transpose_materialized: bool,
    pub construction_mults: u64,
}

impl OperatorStats {
    /// `key=value` lines.
    pub fn to_key_value(&self) -> String {
        format!(
            "variant={}\nn_e={}\nmults_per_apply={}\nactual_mults_per_apply={}\nmemory_bytes={}\nactual_memory_bytes={}\nscratch_bytes={}\nscratch_vectors={}\ntranspose_materialized={}\nconstruction_mults={}\n",
            self.variant,
            self.n_e,
            self.mults_per_apply,
            self.actual_mults_per_apply,
            self.memory_bytes,
            self.actual_memory_bytes,
            self.scratch_bytes,
            self.scratch_vectors,
            self.transpose_materialized,
            self.construction_mults
        )
    }
}

/// `x ↦ (A - omega^2 I) x` over shared operator data. Owns two scratch
/// vectors, so a single instance must not be applied concurrently; clone it
/// per worker instead.
#[derive(Debug, Clone)]
pub struct ShellOperator<S> {
    setup: Arc<OperatorSetup<S>>,
    omega2: f64,
    scratch: [Vec<S>; 2],
    counters: Counters,
    exec: Executor,
    ranges: Vec<Range<usize>>,
}

impl<S: Scalar> ShellOperator<S> {
    pub fn new(setup: Arc<OperatorSetup<S>>, omega: f64, exec: Executor, plan: &SlicePlan) -> Result<Self> {
        let n = setup.n_e();
        let end = plan.index_ranges.last().map_or(0, |r| r.end);
        if end != n {
            return Err(FitError::DimensionMismatch { expected: n, got: end });
        }
        Ok(ShellOperator {
            omega2: omega * omega,
            scratch: [vec![S::zero(); n], vec![S::zero(); n]],
            counters: Counters::default(),
            ranges: plan.index_ranges.clone(),
            exec,
            setup,
        })
    }

    /// Single-threaded operator over a flat row partition.
    pub fn sequential(setup: Arc<OperatorSetup<S>>, omega: f64) -> Self {
        let plan = SlicePlan::flat(setup.n_e(), 1);
        ShellOperator::new(setup, omega, Executor::sequential(), &plan).expect("flat plan matches")
    }

    pub fn variant(&self) -> Variant {
        self.setup.variant
    }

    pub fn setup(&self) -> &Arc<OperatorSetup<S>> {
        &self.setup
    }

    pub fn executor(&self) -> &Executor {
        &self.exec
    }

    pub fn omega(&self) -> f64 {
        self.omega2.sqrt()
    }

    pub fn set_omega(&mut self, omega: f64) {
        self.omega2 = omega * omega;
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn reset_counters(&mut self) {
        self.counters = Counters::default();
    }

    pub fn scratch_vectors(&self) -> usize {
        self.scratch.len()
    }

    pub fn stats(&self) -> OperatorStats {
        let n = self.setup.n_e();
        let v = self.setup.variant;
        let scratch_bytes = (self.scratch.len() * n * std::mem::size_of::<S>()) as u64;
        OperatorStats {
            variant: v,
            n_e: n,
            mults_per_apply: v.mults_per_unknown() * n as u64,
            actual_mults_per_apply: self.setup.actual_mults_per_apply(),
            memory_bytes: v.bytes_per_unknown() * n as u64,
            actual_memory_bytes: self.setup.storage_bytes() as u64,
            scratch_bytes,
            scratch_vectors: self.scratch.len(),
            transpose_materialized: !matches!(v, Variant::E2s),
            construction_mults: self.setup.construction_mults,
        }
    }
}

impl<S: Scalar> LinearOperator<S> for ShellOperator<S> {
    fn dim(&self) -> usize {
        self.setup.n_e()
    }

    fn apply(&mut self, x: &[S], y: &mut [S]) -> Result<()> {
        let n = self.setup.n_e();
        for len in [x.len(), y.len()] {
            if len != n {
                return Err(FitError::DimensionMismatch { expected: n, got: len });
            }
        }
        let w2 = self.omega2;
        let exec = &self.exec;
        let ranges = &self.ranges[..];
        let [s0, s1] = &mut self.scratch;
        match &self.setup.parts {
            OperatorParts::E2s { a, .. } => {
                exec.for_ranges(ranges, y, |range, chunk| {
                    for (yr, r) in chunk.iter_mut().zip(range) {
                        *yr = a.row_dot(r, x) - x[r].scale(w2);
                    }
                });
            }
            OperatorParts::E2t {
                curl,
                curl_t,
                inv_sqrt_eps,
                inv_mu,
            } => {
                // x(1) = D x
                exec.for_blocks(s0, |off, chunk| {
                    for (i, v) in chunk.iter_mut().enumerate() {
                        *v = inv_sqrt_eps[off + i] * x[off + i];
                    }
                });
                // x(2) = M_mu^{-1} C x(1)
                let x1 = &*s0;
                exec.for_ranges(ranges, s1, |range, chunk| {
                    for (v, r) in chunk.iter_mut().zip(range) {
                        *v = inv_mu[r] * curl.row_dot(r, x1);
                    }
                });
                // y = D Cᵀ x(2) - omega^2 x
                let x2 = &*s1;
                exec.for_ranges(ranges, y, |range, chunk| {
                    for (yr, r) in chunk.iter_mut().zip(range) {
                        *yr = inv_sqrt_eps[r] * curl_t.row_dot(r, x2) - x[r].scale(w2);
                    }
                });
            }
            OperatorParts::E2tt { a, a_t } => {
                exec.for_ranges(ranges, s0, |range, chunk| {
                    for (t, r) in chunk.iter_mut().zip(range) {
                        *t = a.row_dot(r, x);
                    }
                });
                let t = &*s0;
                exec.for_ranges(ranges, y, |range, chunk| {
                    for (yr, r) in chunk.iter_mut().zip(range) {
                        *yr = a_t.row_dot(r, t) - x[r].scale(w2);
                    }
                });
            }
        }
        self.counters.applies += 1;
        self.counters.mults += self.setup.variant.mults_per_unknown() * n as u64;
        self.counters.actual_mults += self.setup.actual_mults_per_apply();
        Ok(())
    }

    fn mults(&self) -> u64 {
        self.counters.mults
    }

    fn applies(&self) -> u64 {
        self.counters.applies
    }
}
