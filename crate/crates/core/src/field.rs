//! One-dimensional Poisson solve for the self-consistent field.
//!
//! Potentials live on the `n_x + 1` nodes, densities and fields on the
//! `n_x` intervals between them. The discrete equation at interior node `j`
//! is
//!
//! ```text
//! −[ε_j (V_{j+1} − V_j) − ε_{j−1} (V_j − V_{j−1})] / dx² = (q/ε₀) · ½ (c_{j−1} + c_j)
//! ```
//!
//! with `c_i = N_D,i − ρ_i` the net positive charge density of interval `i`
//! and `ε_i` its relative permittivity.

use crate::error::{Error, Result};
use crate::params::CONSTANTS;

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonProblem {
    pub n_x: usize,
    /// m
    pub dx: f64,
    /// Relative permittivity per interval.
    pub eps_r: Vec<f64>,
    pub v_left: f64,
    pub v_right: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonSolution {
    /// Node potentials, V.
    pub potential: Vec<f64>,
    /// Interval fields `−(V_{i+1} − V_i)/dx`, V/m.
    pub efield: Vec<f64>,
}

impl PoissonProblem {
    pub fn uniform(n_x: usize, length: f64, eps_r: f64, v_left: f64, v_right: f64) -> Self {
        Self {
            n_x,
            dx: length / n_x as f64,
            eps_r: vec![eps_r; n_x],
            v_left,
            v_right,
        }
    }
}

/// Solves for the potential given electron density `rho` and donor
/// density `doping` (both 1/m³, one value per interval).
pub fn solve_poisson(problem: &PoissonProblem, rho: &[f64], doping: &[f64]) -> Result<PoissonSolution> {
    let n = problem.n_x;
    for (what, len) in [("electron density", rho.len()), ("doping", doping.len()), ("permittivity", problem.eps_r.len())] {
        if len != n {
            return Err(Error::Dimension { what, expected: n, got: len });
        }
    }
    let factor = CONSTANTS.q / CONSTANTS.eps0;
    let source: Vec<f64> = rho
        .iter()
        .zip(doping)
        .map(|(r, d)| factor * (d - r))
        .collect();
    Ok(solve_with_source(problem, &source))
}

/// Solves `−d/dx(ε_r dV/dx) = s` with `s` given per interval.
pub fn solve_with_source(problem: &PoissonProblem, source: &[f64]) -> PoissonSolution {
    let n = problem.n_x;
    let dx2 = problem.dx * problem.dx;
    let eps = &problem.eps_r;
    let mut v = vec![0.0; n + 1];
    v[0] = problem.v_left;
    v[n] = problem.v_right;
    let m = n - 1;
    if m > 0 {
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for k in 0..m {
            let j = k + 1;
            let (el, er) = (eps[j - 1], eps[j]);
            lower[k] = -el;
            diag[k] = el + er;
            upper[k] = -er;
            rhs[k] = dx2 * 0.5 * (source[j - 1] + source[j]);
        }
        rhs[0] += eps[0] * v[0];
        rhs[m - 1] += eps[n - 1] * v[n];
        let x = thomas(&lower, &diag, &upper, &rhs);
        v[1..n].copy_from_slice(&x);
    }
    let efield = v.windows(2).map(|w| -(w[1] - w[0]) / problem.dx).collect();
    PoissonSolution { potential: v, efield }
}

/// Tridiagonal elimination without pivoting; `a[0]` and `c[n−1]` are ignored.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let denom = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / denom;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}
