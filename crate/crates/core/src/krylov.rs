//! Preconditioned Krylov solvers on any [`LinearOperator`].
//!
//! CG and CR use the unconjugated bilinear form, which makes them valid for
//! complex symmetric systems and identical to the textbook methods in real
//! arithmetic. Preconditioning is applied as `M^{-1} r`; for CG/CR with a
//! positive diagonal this is algebraically the split-symmetric scheme.
//! BiCGStab, CGS and GMRES use right preconditioning with the Hermitian
//! inner product.
//!
//! Every solve starts from `x = 0`. When the recursive residual drops below
//! the tolerance the true residual `b - A x` is recomputed; if that one has
//! not converged, the method restarts from the true residual.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{FitError, Result};
use crate::operator::LinearOperator;
use crate::parallel::Executor;
use crate::scalar::Scalar;

/// Default stop criterion on the relative residual.
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_RESTART: usize = 30;
pub const DEFAULT_MAX_ITER: usize = 20_000;
const MAX_RESIDUAL_REPLACEMENTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cg,
    #[serde(rename = "bcgs")]
    BiCgStab,
    Cr,
    Gmres,
    /// Conjugate gradient squared. Known to lose accuracy close to
    /// resonances, so it has to be enabled explicitly.
    Cgs,
}

impl Method {
    pub const STANDARD: [Method; 4] = [Method::Cg, Method::BiCgStab, Method::Cr, Method::Gmres];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cg => "cg",
            Method::BiCgStab => "bcgs",
            Method::Cr => "cr",
            Method::Gmres => "gmres",
            Method::Cgs => "cgs",
        }
    }

    /// Operator applications per iteration.
    pub fn applies_per_iteration(self) -> u64 {
        match self {
            Method::BiCgStab | Method::Cgs => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cg" => Ok(Method::Cg),
            "bcgs" | "bicgstab" => Ok(Method::BiCgStab),
            "cr" => Ok(Method::Cr),
            "gmres" => Ok(Method::Gmres),
            "cgs" => Ok(Method::Cgs),
            other => Err(FitError::InvalidArgument(format!(
                "unknown solver '{other}' (expected cg, bcgs, cr, gmres or cgs)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub tol: f64,
    pub max_iter: usize,
    /// GMRES restart length.
    pub restart: usize,
    pub allow_cgs: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Cg,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            restart: DEFAULT_RESTART,
            allow_cgs: false,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        SolverConfig {
            method,
            allow_cgs: method == Method::Cgs,
            ..SolverConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(FitError::InvalidArgument(format!("tolerance {} must be > 0", self.tol)));
        }
        if self.method == Method::Gmres && self.restart == 0 {
            return Err(FitError::InvalidArgument("gmres restart must be >= 1".into()));
        }
        if self.method == Method::Cgs && !self.allow_cgs {
            return Err(FitError::InvalidArgument(
                "cgs is disabled: it can return inaccurate results near resonances; enable it explicitly".into(),
            ));
        }
        Ok(())
    }
}

pub trait Preconditioner<S: Scalar> {
    fn apply(&self, r: &[S], z: &mut [S], exec: &Executor);
}

/// Diagonal preconditioner `z_i = r_i / max(|P_ii - omega^2|, floor)` with
/// `floor = eps_mach * max_i |P_ii|`; masked entries map to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobi {
    inv: Vec<f64>,
}

impl Jacobi {
    pub fn new<S: Scalar>(diag: &[S], omega: f64, mask: Option<&[bool]>) -> Jacobi {
        let max = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let floor = (f64::EPSILON * max).max(f64::MIN_POSITIVE);
        let w2 = omega * omega;
        let inv = diag
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let masked = mask.is_some_and(|m| m[i]);
                if masked {
                    0.0
                } else {
                    1.0 / (d - S::from_f64(w2)).abs().max(floor)
                }
            })
            .collect();
        Jacobi { inv }
    }

    pub fn inverse_diagonal(&self) -> &[f64] {
        &self.inv
    }
}

impl<S: Scalar> Preconditioner<S> for Jacobi {
    fn apply(&self, r: &[S], z: &mut [S], exec: &Executor) {
        exec.for_blocks(z, |off, chunk| {
            for (i, zi) in chunk.iter_mut().enumerate() {
                *zi = r[off + i] * self.inv[off + i];
            }
        });
    }
}

/// `z = Jacobi(P, omega) r`.
pub fn jacobi_apply<S: Scalar>(diag: &[S], omega: f64, mask: Option<&[bool]>, r: &[S]) -> Vec<S> {
    let mut z = vec![S::zero(); r.len()];
    Preconditioner::<S>::apply(&Jacobi::new(diag, omega, mask), r, &mut z, &Executor::sequential());
    z
}

/// No preconditioning (optionally still zeroing masked entries).
#[derive(Debug, Clone, Default)]
pub struct IdentityPreconditioner {
    pub mask: Option<Vec<bool>>,
}

impl<S: Scalar> Preconditioner<S> for IdentityPreconditioner {
    fn apply(&self, r: &[S], z: &mut [S], exec: &Executor) {
        exec.copy(r, z);
        if let Some(mask) = &self.mask {
            for (zi, &m) in z.iter_mut().zip(mask) {
                if m {
                    *zi = S::zero();
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakdown {
    pub iteration: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport<S> {
    #[serde(skip)]
    pub solution: Vec<S>,
    pub method: Method,
    pub iterations: usize,
    /// Relative residual norms; entry 0 is 1.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// True relative residual `‖b - A x‖ / ‖b‖` of the returned solution.
    pub relative_residual: f64,
    pub operator_applies: u64,
    pub mults_consumed: u64,
    pub breakdown: Option<Breakdown>,
}

enum Outcome {
    /// The recursive residual dropped below the tolerance.
    Converged,
    /// Iteration budget spent, or one GMRES cycle completed.
    Exhausted,
    Breakdown(Breakdown),
}

struct Ctx<'a> {
    exec: &'a Executor,
    tol: f64,
    b_norm: f64,
    max_iter: usize,
    iterations: usize,
    history: Vec<f64>,
}

impl Ctx<'_> {
    fn record(&mut self, res: f64) {
        self.iterations += 1;
        self.history.push(res);
    }

    fn budget_left(&self) -> bool {
        self.iterations < self.max_iter
    }

    fn breakdown(&self, reason: &str) -> Outcome {
        Outcome::Breakdown(Breakdown {
            iteration: self.iterations,
            reason: reason.to_string(),
        })
    }
}

fn bad<S: Scalar>(v: S) -> bool {
    v.is_zero() || !v.abs().is_finite()
}

/// Solves `op x = b`.
pub fn solve<S, O, P>(
    config: &SolverConfig,
    op: &mut O,
    precond: &P,
    b: &[S],
    exec: &Executor,
) -> Result<SolveReport<S>>
where
    S: Scalar,
    O: LinearOperator<S>,
    P: Preconditioner<S>,
{
    config.validate()?;
    let n = op.dim();
    if b.len() != n {
        return Err(FitError::DimensionMismatch { expected: n, got: b.len() });
    }
    let applies0 = op.applies();
    let mults0 = op.mults();
    let b_norm = exec.norm2(b);
    let mut x = vec![S::zero(); n];
    if b_norm == 0.0 {
        return Ok(SolveReport {
            solution: x,
            method: config.method,
            iterations: 0,
            residual_history: vec![1.0],
            converged: true,
            relative_residual: 0.0,
            operator_applies: 0,
            mults_consumed: 0,
            breakdown: None,
        });
    }
    let mut ctx = Ctx {
        exec,
        tol: config.tol,
        b_norm,
        max_iter: config.max_iter,
        iterations: 0,
        history: vec![1.0],
    };
    let mut r = b.to_vec();
    let mut true_res = 1.0;
    let mut replacements = 0;
    let mut breakdown = None;
    let mut first = true;
    let mut best: (f64, Vec<S>) = (1.0, x.clone());
    loop {
        if !first {
            residual(op, b, &x, &mut r, exec)?;
            true_res = exec.norm2(&r) / b_norm;
            if true_res < best.0 {
                best = (true_res, x.clone());
            }
            if true_res < config.tol {
                break;
            }
        }
        if !ctx.budget_left() {
            break;
        }
        let outcome = match config.method {
            Method::Cg => cg(op, precond, &mut x, &mut r, &mut ctx)?,
            Method::Cr => cr(op, precond, &mut x, &mut r, &mut ctx)?,
            Method::BiCgStab => bicgstab(op, precond, &mut x, &mut r, &mut ctx)?,
            Method::Cgs => cgs(op, precond, &mut x, &mut r, &mut ctx)?,
            Method::Gmres => gmres_cycle(op, precond, &mut x, &r, config.restart, &mut ctx)?,
        };
        first = false;
        match outcome {
            Outcome::Converged => {
                if config.method != Method::Gmres {
                    replacements += 1;
                    if replacements > MAX_RESIDUAL_REPLACEMENTS {
                        residual(op, b, &x, &mut r, exec)?;
                        true_res = exec.norm2(&r) / b_norm;
                        break;
                    }
                }
            }
            Outcome::Exhausted => {}
            Outcome::Breakdown(bd) => {
                residual(op, b, &x, &mut r, exec)?;
                true_res = exec.norm2(&r) / b_norm;
                breakdown = Some(bd);
                break;
            }
        }
    }
    let mut converged = true_res < config.tol;
    if !converged && best.0 < true_res {
        x = best.1;
        true_res = best.0;
        converged = true_res < config.tol;
    }
    Ok(SolveReport {
        solution: x,
        method: config.method,
        iterations: ctx.iterations,
        residual_history: ctx.history,
        converged,
        relative_residual: true_res,
        operator_applies: op.applies() - applies0,
        mults_consumed: op.mults() - mults0,
        breakdown,
    })
}

fn residual<S: Scalar, O: LinearOperator<S>>(
    op: &mut O,
    b: &[S],
    x: &[S],
    r: &mut [S],
    exec: &Executor,
) -> Result<()> {
    op.apply(x, r)?;
    exec.for_blocks(r, |off, chunk| {
        for (i, ri) in chunk.iter_mut().enumerate() {
            *ri = b[off + i] - *ri;
        }
    });
    Ok(())
}

fn cg<S: Scalar, O: LinearOperator<S>, P: Preconditioner<S>>(
    op: &mut O,
    m: &P,
    x: &mut [S],
    r: &mut [S],
    ctx: &mut Ctx<'_>,
) -> Result<Outcome> {
    let exec = ctx.exec;
    let n = x.len();
    let mut z = vec![S::zero(); n];
    let mut q = vec![S::zero(); n];
    m.apply(r, &mut z, exec);
    let mut p = z.clone();
    let mut rz = exec.dotu(r, &z);
    if bad(rz) {
        return Ok(ctx.breakdown("cg: (r, M r) vanished"));
    }
    while ctx.budget_left() {
        op.apply(&p, &mut q)?;
        let pq = exec.dotu(&p, &q);
        if bad(pq) {
            return Ok(ctx.breakdown("cg: (p, A p) vanished"));
        }
        let alpha = rz / pq;
        exec.axpy(alpha, &p, x);
        exec.axpy(-alpha, &q, r);
        let res = exec.norm2(r) / ctx.b_norm;
        ctx.record(res);
        if res < ctx.tol {
            return Ok(Outcome::Converged);
        }
        m.apply(r, &mut z, exec);
        let rz_new = exec.dotu(r, &z);
        if bad(rz_new) {
            return Ok(ctx.breakdown("cg: (r, M r) vanished"));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        exec.xpby(&z, beta, &mut p);
    }
    Ok(Outcome::Exhausted)
}

fn cr<S: Scalar, O: LinearOperator<S>, P: Preconditioner<S>>(
    op: &mut O,
    m: &P,
    x: &mut [S],
    r: &mut [S],
    ctx: &mut Ctx<'_>,
) -> Result<Outcome> {
    let exec = ctx.exec;
    let n = x.len();
    let mut z = vec![S::zero(); n];
    let mut az = vec![S::zero(); n];
    let mut q = vec![S::zero(); n];
    m.apply(r, &mut z, exec);
    op.apply(&z, &mut az)?;
    let mut p = z.clone();
    let mut ap = az.clone();
    let mut zaz = exec.dotu(&z, &az);
    if bad(zaz) {
        return Ok(ctx.breakdown("cr: (z, A z) vanished"));
    }
    while ctx.budget_left() {
        m.apply(&ap, &mut q, exec);
        let denom = exec.dotu(&ap, &q);
        if bad(denom) {
            return Ok(ctx.breakdown("cr: (A p, M A p) vanished"));
        }
        let alpha = zaz / denom;
        exec.axpy(alpha, &p, x);
        exec.axpy(-alpha, &ap, r);
        exec.axpy(-alpha, &q, &mut z);
        let res = exec.norm2(r) / ctx.b_norm;
        ctx.record(res);
        if res < ctx.tol {
            return Ok(Outcome::Converged);
        }
        op.apply(&z, &mut az)?;
        let zaz_new = exec.dotu(&z, &az);
        if bad(zaz_new) {
            return Ok(ctx.breakdown("cr: (z, A z) vanished"));
        }
        let beta = zaz_new / zaz;
        zaz = zaz_new;
        exec.xpby(&z, beta, &mut p);
        exec.xpby(&az, beta, &mut ap);
    }
    Ok(Outcome::Exhausted)
}

fn bicgstab<S: Scalar, O: LinearOperator<S>, P: Preconditioner<S>>(
    op: &mut O,
    m: &P,
    x: &mut [S],
    r: &mut [S],
    ctx: &mut Ctx<'_>,
) -> Result<Outcome> {
    let exec = ctx.exec;
    let n = x.len();
    let r_hat = r.to_vec();
    let mut p = vec![S::zero(); n];
    let mut v = vec![S::zero(); n];
    let mut p_hat = vec![S::zero(); n];
    let mut s_hat = vec![S::zero(); n];
    let mut t = vec![S::zero(); n];
    let (mut rho, mut alpha, mut omega) = (S::one(), S::one(), S::one());
    let mut first = true;
    while ctx.budget_left() {
        let rho_new = exec.dotc(&r_hat, r);
        if bad(rho_new) {
            return Ok(ctx.breakdown("bcgs: (r̂, r) vanished"));
        }
        if first {
            exec.copy(r, &mut p);
            first = false;
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            // p = r + beta (p - omega v)
            exec.for_blocks(&mut p, |off, chunk| {
                for (i, pi) in chunk.iter_mut().enumerate() {
                    *pi = r[off + i] + beta * (*pi - omega * v[off + i]);
                }
            });
        }
        rho = rho_new;
        m.apply(&p, &mut p_hat, exec);
        op.apply(&p_hat, &mut v)?;
        let rv = exec.dotc(&r_hat, &v);
        if bad(rv) {
            return Ok(ctx.breakdown("bcgs: (r̂, v) vanished"));
        }
        alpha = rho / rv;
        // r now holds s
        exec.axpy(-alpha, &v, r);
        let s_res = exec.norm2(r) / ctx.b_norm;
        if s_res < ctx.tol {
            exec.axpy(alpha, &p_hat, x);
            ctx.record(s_res);
            return Ok(Outcome::Converged);
        }
        m.apply(r, &mut s_hat, exec);
        op.apply(&s_hat, &mut t)?;
        let tt = exec.dotc(&t, &t);
        if bad(tt) {
            return Ok(ctx.breakdown("bcgs: (t, t) vanished"));
        }
        omega = exec.dotc(&t, r) / tt;
        exec.axpy(alpha, &p_hat, x);
        exec.axpy(omega, &s_hat, x);
        exec.axpy(-omega, &t, r);
        let res = exec.norm2(r) / ctx.b_norm;
        ctx.record(res);
        if res < ctx.tol {
            return Ok(Outcome::Converged);
        }
        if bad(omega) {
            return Ok(ctx.breakdown("bcgs: omega vanished"));
        }
    }
    Ok(Outcome::Exhausted)
}

fn cgs<S: Scalar, O: LinearOperator<S>, P: Preconditioner<S>>(
    op: &mut O,
    m: &P,
    x: &mut [S],
    r: &mut [S],
    ctx: &mut Ctx<'_>,
) -> Result<Outcome> {
    let exec = ctx.exec;
    let n = x.len();
    let r_hat = r.to_vec();
    let mut u = vec![S::zero(); n];
    let mut p = vec![S::zero(); n];
    let mut q = vec![S::zero(); n];
    let mut tmp = vec![S::zero(); n];
    let mut hat = vec![S::zero(); n];
    let mut v = vec![S::zero(); n];
    let mut rho_prev = S::one();
    let mut first = true;
    while ctx.budget_left() {
        let rho = exec.dotc(&r_hat, r);
        if bad(rho) {
            return Ok(ctx.breakdown("cgs: (r̂, r) vanished"));
        }
        if first {
            exec.copy(r, &mut u);
            exec.copy(r, &mut p);
            first = false;
        } else {
            let beta = rho / rho_prev;
            for i in 0..n {
                u[i] = r[i] + beta * q[i];
                p[i] = u[i] + beta * (q[i] + beta * p[i]);
            }
        }
        m.apply(&p, &mut hat, exec);
        op.apply(&hat, &mut v)?;
        let sigma = exec.dotc(&r_hat, &v);
        if bad(sigma) {
            return Ok(ctx.breakdown("cgs: (r̂, v) vanished"));
        }
        let alpha = rho / sigma;
        for i in 0..n {
            q[i] = u[i] - alpha * v[i];
            tmp[i] = u[i] + q[i];
        }
        m.apply(&tmp, &mut hat, exec);
        exec.axpy(alpha, &hat, x);
        op.apply(&hat, &mut tmp)?;
        exec.axpy(-alpha, &tmp, r);
        rho_prev = rho;
        let res = exec.norm2(r) / ctx.b_norm;
        ctx.record(res);
        if res < ctx.tol {
            return Ok(Outcome::Converged);
        }
    }
    Ok(Outcome::Exhausted)
}

/// One restart cycle of right-preconditioned GMRES with modified
/// Gram-Schmidt and Givens rotations.
fn gmres_cycle<S: Scalar, O: LinearOperator<S>, P: Preconditioner<S>>(
    op: &mut O,
    m: &P,
    x: &mut [S],
    r: &[S],
    restart: usize,
    ctx: &mut Ctx<'_>,
) -> Result<Outcome> {
    let exec = ctx.exec;
    let n = x.len();
    let beta = exec.norm2(r);
    if beta == 0.0 {
        return Ok(Outcome::Converged);
    }
    let mut basis: Vec<Vec<S>> = Vec::with_capacity(restart + 1);
    basis.push(r.iter().map(|&v| v.scale(1.0 / beta)).collect());
    // column-major Hessenberg, h[j] holds column j (length j + 2)
    let mut h: Vec<Vec<S>> = Vec::with_capacity(restart);
    let mut cs: Vec<f64> = Vec::with_capacity(restart);
    let mut sn: Vec<S> = Vec::with_capacity(restart);
    let mut g = vec![S::zero(); restart + 1];
    g[0] = S::from_f64(beta);
    let mut z = vec![S::zero(); n];
    let mut outcome = Outcome::Exhausted;
    let mut k = 0;
    while k < restart && ctx.budget_left() {
        m.apply(&basis[k], &mut z, exec);
        let mut w = vec![S::zero(); n];
        op.apply(&z, &mut w)?;
        let mut col = vec![S::zero(); k + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij = exec.dotc(v, &w);
            col[i] = hij;
            exec.axpy(-hij, v, &mut w);
        }
        let h_next = exec.norm2(&w);
        col[k + 1] = S::from_f64(h_next);
        for i in 0..k {
            let a = col[i];
            let bb = col[i + 1];
            col[i] = a.scale(cs[i]) + sn[i] * bb;
            col[i + 1] = bb.scale(cs[i]) - sn[i].conj() * a;
        }
        let (c, s) = givens(col[k], col[k + 1]);
        col[k] = col[k].scale(c) + s * col[k + 1];
        col[k + 1] = S::zero();
        let gk = g[k];
        g[k] = gk.scale(c);
        g[k + 1] = -(s.conj() * gk);
        cs.push(c);
        sn.push(s);
        h.push(col);
        k += 1;
        let res = g[k].abs() / ctx.b_norm;
        ctx.record(res);
        if res < ctx.tol {
            outcome = Outcome::Converged;
            break;
        }
        if h_next == 0.0 {
            // invariant subspace reached; the update below is exact
            outcome = Outcome::Converged;
            break;
        }
        if k < restart {
            for wi in w.iter_mut() {
                *wi = wi.scale(1.0 / h_next);
            }
            basis.push(w);
        }
    }
    // back substitution H y = g
    let mut y = vec![S::zero(); k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in i + 1..k {
            acc -= h[j][i] * y[j];
        }
        if h[i][i].is_zero() {
            return Ok(ctx.breakdown("gmres: singular Hessenberg"));
        }
        y[i] = acc / h[i][i];
    }
    let mut u = vec![S::zero(); n];
    for (yj, v) in y.iter().zip(&basis) {
        exec.axpy(*yj, v, &mut u);
    }
    m.apply(&u, &mut z, exec);
    exec.axpy(S::one(), &z, x);
    Ok(outcome)
}

/// Rotation `[c, s; -conj(s), c]` zeroing the second entry of `(a, b)`.
fn givens<S: Scalar>(a: S, b: S) -> (f64, S) {
    let abs_a = a.abs();
    let abs_b = b.abs();
    if abs_b == 0.0 {
        return (1.0, S::zero());
    }
    if abs_a == 0.0 {
        return (0.0, b.conj().scale(1.0 / abs_b));
    }
    let norm = abs_a.hypot(abs_b);
    let phase = a.scale(1.0 / abs_a);
    (abs_a / norm, phase * b.conj().scale(1.0 / norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::SparseOperator;
    use num_complex::Complex64;

    /// 1D Laplacian shifted by `shift`.
    fn laplacian(n: usize, shift: f64) -> SparseOperator<f64> {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0 + shift)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        SparseOperator::from_rows(n, rows).unwrap()
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let mut a = laplacian(10, 0.1);
        let b = vec![0.0; 10];
        for method in Method::STANDARD {
            let cfg = SolverConfig::with_method(method);
            let rep = solve(&cfg, &mut a, &IdentityPreconditioner::default(), &b, &Executor::sequential()).unwrap();
            assert_eq!(rep.iterations, 0);
            assert!(rep.solution.iter().all(|&v| v == 0.0));
            assert!(rep.converged);
        }
    }

    #[test]
    fn all_methods_recover_known_solution() {
        let n = 60;
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin() + 0.1).collect();
        let mut a = laplacian(n, 0.05);
        let mut b = vec![0.0; n];
        a.spmv(&x_true, &mut b).unwrap();
        let diag: Vec<f64> = vec![2.05; n];
        let jac = Jacobi::new(&diag, 0.0, None);
        for method in [Method::Cg, Method::BiCgStab, Method::Cr, Method::Gmres, Method::Cgs] {
            let mut cfg = SolverConfig::with_method(method);
            cfg.restart = 20;
            let rep = solve(&cfg, &mut a, &jac, &b, &Executor::sequential()).unwrap();
            assert!(rep.converged, "{method}: {:?}", rep.relative_residual);
            assert!(rep.relative_residual < 1e-12);
            let err = rep
                .solution
                .iter()
                .zip(&x_true)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "{method}: {err}");
            assert_eq!(rep.residual_history[0], 1.0);
        }
    }

    #[test]
    fn gmres_history_is_monotone_within_cycles() {
        let n = 80;
        let mut a = laplacian(n, 0.01);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
        let mut cfg = SolverConfig::with_method(Method::Gmres);
        cfg.restart = 10;
        let rep = solve(&cfg, &mut a, &IdentityPreconditioner::default(), &b, &Executor::sequential()).unwrap();
        assert!(rep.converged);
        for cycle in rep.residual_history[1..].chunks(10) {
            for w in cycle.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
            }
        }
    }

    #[test]
    fn cg_handles_complex_symmetric_systems() {
        let n = 30;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, Complex64::new(2.5, 0.3))];
                if i > 0 {
                    r.push((i - 1, Complex64::new(-1.0, 0.0)));
                }
                if i + 1 < n {
                    r.push((i + 1, Complex64::new(-1.0, 0.0)));
                }
                r
            })
            .collect();
        let mut a = SparseOperator::from_rows(n, rows).unwrap();
        let x_true: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        a.spmv(&x_true, &mut b).unwrap();
        for method in [Method::Cg, Method::Cr, Method::BiCgStab, Method::Gmres] {
            let rep = solve(
                &SolverConfig::with_method(method),
                &mut a,
                &IdentityPreconditioner::default(),
                &b,
                &Executor::sequential(),
            )
            .unwrap();
            assert!(rep.converged, "{method}");
            let err = rep.solution.iter().zip(&x_true).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{method} {err}");
        }
    }

    #[test]
    fn jacobi_examples() {
        let r = vec![1.0, -2.0, 3.0];
        assert_eq!(jacobi_apply(&[1.0, 1.0, 1.0], 0.0, None, &r), r);
        let z = jacobi_apply(&[1.0, 1.0, 1.0], 0.0, Some(&[false, true, false]), &r);
        assert_eq!(z, vec![1.0, 0.0, 3.0]);
        // |P - omega^2| far below the floor is clamped
        let p = [4.0, 1e20, 2.0];
        let z = jacobi_apply(&p, 2.0, None, &r);
        assert!(z.iter().all(|v| v.is_finite()));
        assert_eq!(z[0], 1.0 / (f64::EPSILON * 1e20));
    }

    #[test]
    fn cgs_requires_opt_in() {
        let mut a = laplacian(4, 1.0);
        let mut cfg = SolverConfig::with_method(Method::Cgs);
        cfg.allow_cgs = false;
        let res = solve(&cfg, &mut a, &IdentityPreconditioner::default(), &[1.0; 4], &Executor::sequential());
        assert!(res.is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let mut a = laplacian(200, 0.5);
        let mut cfg = SolverConfig::with_method(Method::Cg);
        cfg.max_iter = 5;
        let b = vec![1.0; 200];
        let rep = solve(&cfg, &mut a, &IdentityPreconditioner::default(), &b, &Executor::sequential()).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 5);
        assert!(rep.relative_residual < 1.0);
    }

    #[test]
    fn breakdown_is_reported_with_iteration() {
        // r = b is A-orthogonal to itself: (p, A p) = 0 on the first step
        let rows = vec![vec![(1, 1.0)], vec![(0, 1.0)]];
        let mut a = SparseOperator::from_rows(2, rows).unwrap();
        let rep = solve(
            &SolverConfig::with_method(Method::Cg),
            &mut a,
            &IdentityPreconditioner::default(),
            &[1.0, 0.0],
            &Executor::sequential(),
        )
        .unwrap();
        assert!(!rep.converged);
        let bd = rep.breakdown.unwrap();
        assert_eq!(bd.iteration, 0);
    }
}
