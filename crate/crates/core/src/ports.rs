//! Discrete ports, probe voltages and network parameters.
//!
//! A port is a filamentary current impressed along a path of primal edges.
//! Each path segment carries the orientation of the walk relative to the
//! edge direction. Port voltages use the passive sign convention: the
//! terminal voltage is the potential rise from tail to head of the path,
//! i.e. the negated line integral of the field along it. With this choice a
//! lossless capacitive port yields a negative reactance and a resistive
//! termination a positive resistance.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};
use crate::grid::{Axis, Grid};
use crate::materials::MaterialDiagonals;
use crate::scalar::Scalar;

/// One edge of a path with its orientation (`+1` along the edge axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub edge: usize,
    pub sign: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgePath {
    pub segments: Vec<Segment>,
}

impl EdgePath {
    /// Builds the path through consecutive grid nodes; neighbours must
    /// differ by one index along exactly one axis.
    pub fn from_nodes(grid: &Grid, nodes: &[[usize; 3]]) -> Result<EdgePath> {
        let dims = grid.nodes();
        for n in nodes {
            if (0..3).any(|a| n[a] >= dims[a]) {
                return Err(FitError::NodeOutOfRange {
                    i: n[0],
                    j: n[1],
                    k: n[2],
                    nodes: dims,
                });
            }
        }
        if nodes.len() < 2 {
            return Err(FitError::InvalidArgument("a path needs at least two nodes".into()));
        }
        let mut segments = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            let (a, b) = (w[0], w[1]);
            let diff: Vec<usize> = (0..3).filter(|&ax| a[ax] != b[ax]).collect();
            if diff.len() != 1 || a[diff[0]].abs_diff(b[diff[0]]) != 1 {
                return Err(FitError::InvalidArgument(format!(
                    "nodes {a:?} and {b:?} are not joined by a single grid edge"
                )));
            }
            let axis = Axis::from_index(diff[0]);
            let (tail, sign) = if b[diff[0]] > a[diff[0]] { (a, 1.0) } else { (b, -1.0) };
            segments.push(Segment {
                edge: grid.edge((tail, axis)),
                sign,
            });
        }
        Ok(EdgePath { segments })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Errors if any segment is an eliminated unknown.
    pub fn check_unmasked(&self, mask: &[bool], name: &str) -> Result<()> {
        for s in &self.segments {
            if mask.get(s.edge).copied().unwrap_or(true) {
                return Err(FitError::InvalidPort {
                    name: name.to_string(),
                    reason: format!("edge {} is masked by PEC or is degenerate", s.edge),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub path: EdgePath,
    /// Impressed current in amperes.
    pub current: Complex64,
    /// Integration path for the voltage; the excitation path if absent.
    pub probe: Option<EdgePath>,
}

impl Port {
    pub fn new(name: impl Into<String>, path: EdgePath) -> Port {
        Port {
            name: name.into(),
            path,
            current: Complex64::new(1.0, 0.0),
            probe: None,
        }
    }

    pub fn probe_path(&self) -> &EdgePath {
        self.probe.as_ref().unwrap_or(&self.path)
    }

    pub fn validate(&self, mask: &[bool]) -> Result<()> {
        if self.path.is_empty() {
            return Err(FitError::InvalidPort {
                name: self.name.clone(),
                reason: "empty path".into(),
            });
        }
        self.path.check_unmasked(mask, &self.name)?;
        if let Some(p) = &self.probe {
            p.check_unmasked(mask, &self.name)?;
        }
        Ok(())
    }
}

/// Impressed edge currents `j` of one port.
pub fn current_vector(port: &Port, n_e: usize) -> Vec<Complex64> {
    let mut j = vec![Complex64::new(0.0, 0.0); n_e];
    for s in &port.path.segments {
        j[s.edge] += port.current * s.sign;
    }
    j
}

/// `b = -j omega M_eps^{-1/2} j` for one port.
pub fn build_rhs(port: &Port, diag: &MaterialDiagonals, omega: f64) -> Result<Vec<Complex64>> {
    if !(omega > 0.0) {
        return Err(FitError::InvalidArgument(format!("omega must be > 0, got {omega}")));
    }
    port.validate(&diag.edge_mask)?;
    let s = Complex64::new(0.0, omega);
    let mut b = current_vector(port, diag.n_edges());
    for (bi, d) in b.iter_mut().zip(&diag.inv_sqrt_eps) {
        *bi = -s * d * *bi;
    }
    Ok(b)
}

/// Real right-hand side `M_eps^{-1/2} t` for a unit current along the path
/// (`t` holding the orientation signs). For real diagonals the solution `x`
/// of `(A - omega^2) x = r` yields `e' = -j omega I x`.
pub fn unit_rhs_real(port: &Port, diag: &MaterialDiagonals) -> Result<Vec<f64>> {
    port.validate(&diag.edge_mask)?;
    let mut r = vec![0.0; diag.n_edges()];
    for s in &port.path.segments {
        r[s.edge] += s.sign * diag.inv_sqrt_eps[s.edge].re;
    }
    Ok(r)
}

/// Sum of all port excitations in one right-hand side.
pub fn superposed_rhs(ports: &[Port], diag: &MaterialDiagonals, omega: f64) -> Result<Vec<Complex64>> {
    let mut b = vec![Complex64::new(0.0, 0.0); diag.n_edges()];
    for p in ports {
        for (acc, v) in b.iter_mut().zip(build_rhs(p, diag, omega)?) {
            *acc += v;
        }
    }
    Ok(b)
}

/// Line integral `u = Σ sign (M_eps^{-1/2} e')` along a path.
pub fn probe_voltage<S: Scalar>(e_prime: &[S], diag: &MaterialDiagonals, path: &EdgePath) -> Complex64 {
    path.segments
        .iter()
        .map(|s| diag.inv_sqrt_eps[s.edge] * e_prime[s.edge].to_complex() * s.sign)
        .sum()
}

/// Terminal voltage of a port (passive convention), `-u`.
pub fn port_voltage<S: Scalar>(e_prime: &[S], diag: &MaterialDiagonals, port: &Port) -> Complex64 {
    -probe_voltage(e_prime, diag, port.probe_path())
}

/// `Z_mn = V_m / I_n` where `voltages[n][m]` is the terminal voltage of port
/// `m` with only port `n` excited by current `currents[n]`.
pub fn z_parameters(voltages: &[Vec<Complex64>], currents: &[Complex64]) -> Result<DMatrix<Complex64>> {
    let n = currents.len();
    if voltages.len() != n || voltages.iter().any(|v| v.len() != n) {
        return Err(FitError::DimensionMismatch {
            expected: n,
            got: voltages.len(),
        });
    }
    if let Some(k) = currents.iter().position(|c| c.norm() == 0.0) {
        return Err(FitError::InvalidArgument(format!("port {k} has zero current")));
    }
    Ok(DMatrix::from_fn(n, n, |m, k| voltages[k][m] / currents[k]))
}

fn checked_inverse(m: DMatrix<Complex64>, what: &str) -> Result<DMatrix<Complex64>> {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !cond.is_finite() || cond * f64::EPSILON >= 1.0 {
        return Err(FitError::Singular(format!("{what} has condition number {cond:e}")));
    }
    m.try_inverse()
        .ok_or_else(|| FitError::Singular(format!("{what} has condition number {cond:e}")))
}

/// `S = (Z - Z0 I)(Z + Z0 I)^{-1}`.
pub fn s_from_z(z: &DMatrix<Complex64>, z0: f64) -> Result<DMatrix<Complex64>> {
    let n = z.nrows();
    let id = DMatrix::<Complex64>::identity(n, n) * Complex64::new(z0, 0.0);
    let inv = checked_inverse(z + &id, "Z + Z0 I")?;
    Ok((z - &id) * inv)
}

/// `Z = Z0 (I + S)(I - S)^{-1}`.
pub fn z_from_s(s: &DMatrix<Complex64>, z0: f64) -> Result<DMatrix<Complex64>> {
    let n = s.nrows();
    let id = DMatrix::<Complex64>::identity(n, n);
    let inv = checked_inverse(&id - s, "I - S")?;
    Ok((&id + s) * inv * Complex64::new(z0, 0.0))
}

/// Network parameters at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkResult {
    pub frequency: f64,
    pub z: DMatrix<Complex64>,
    pub s: DMatrix<Complex64>,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub wall_s: f64,
    /// Solver or post-processing problem recorded for this frequency.
    pub error: Option<String>,
}

impl NetworkResult {
    pub fn n_ports(&self) -> usize {
        self.z.nrows()
    }

    pub fn total_iterations(&self) -> usize {
        self.iterations.iter().sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    /// `|Z_mn - Z_nm| / max |Z|` over all pairs.
    pub fn reciprocity_error(&self) -> f64 {
        let n = self.n_ports();
        let max = self.z.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.z[(i, j)] - self.z[(j, i)]).norm());
            }
        }
        worst / max
    }
}
