//! Exact minimizers of small instances by support/sign enumeration.
//!
//! A point `u` with support `I` and signs `s_I` minimizes `½‖Ku − g‖² + α‖u‖₁`
//! iff `K_I*(K_I u_I − g) + α s_I = 0`, `sign(u_I) = s_I` and
//! `|K_j*(Ku − g)| ≤ α` off the support.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::operators::Vector;
use crate::prox::Problem;

/// Slack allowed on the off-support dual bound `|K_j*(Ku − g)| ≤ α`.
pub const DUAL_TOL: f64 = 1e-10;

/// Gram data `K*K`, `K*g` of a problem with a materialized operator.
pub struct DenseKkt {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    alpha: f64,
}

impl DenseKkt {
    pub fn new(p: &Problem) -> Result<Self> {
        let n = p.dim();
        let mut columns = DMatrix::zeros(p.op().range_dim(), n);
        let mut e = Vector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            columns.set_column(j, &p.op().apply(&e)?);
            e[j] = 0.0;
        }
        Ok(Self {
            gram: columns.tr_mul(&columns),
            rhs: columns.tr_mul(p.data()),
            alpha: p.alpha(),
        })
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// Solves the reduced stationarity system for the given pattern and returns
    /// the full-length point if every optimality condition holds.
    pub fn verify_pattern(&self, support: &[usize], signs: &[f64]) -> Option<Vector> {
        let k = support.len();
        let n = self.dim();
        let mut u = Vector::zeros(n);
        if k > 0 {
            let sub = DMatrix::from_fn(k, k, |a, b| self.gram[(support[a], support[b])]);
            let b = DVector::from_fn(k, |a, _| self.rhs[support[a]] - self.alpha * signs[a]);
            let chol = sub.cholesky()?;
            let x = chol.solve(&b);
            for a in 0..k {
                if !(x[a] * signs[a] > 0.0) {
                    return None;
                }
                u[support[a]] = x[a];
            }
        }
        // K*(Ku − g) = Gu − K*g
        let dual = &self.gram * &u - &self.rhs;
        let tol = self.alpha + DUAL_TOL;
        let feasible = (0..n).filter(|j| !support.contains(j)).all(|j| dual[j].abs() <= tol);
        feasible.then_some(u)
    }
}

/// Enumerates supports of size `≤ max_support` (smallest first) with every sign
/// pattern and returns the first point satisfying the optimality conditions.
pub fn oracle_solve(p: &Problem, max_support: usize) -> Result<Vector> {
    let kkt = DenseKkt::new(p)?;
    let n = kkt.dim();
    for size in 0..=max_support.min(n) {
        for support in (0..n).combinations(size) {
            for mask in 0u64..(1u64 << size) {
                let signs: Vec<f64> = (0..size).map(|a| if mask >> a & 1 == 1 { -1.0 } else { 1.0 }).collect();
                if let Some(u) = kkt.verify_pattern(&support, &signs) {
                    return Ok(u);
                }
            }
        }
    }
    Err(Error::OracleFailed { max_support })
}

/// Re-solves the optimality system on the support and signs of `approx`,
/// returning the exact minimizer when that pattern is optimal. Used to polish
/// long-run iterative solutions into reference points for larger instances.
pub fn refine_on_support(p: &Problem, approx: &Vector, zero_tol: f64) -> Result<Option<Vector>> {
    check_len("approximate solution", p.dim(), approx.len())?;
    let kkt = DenseKkt::new(p)?;
    let support: Vec<usize> = (0..approx.len()).filter(|&i| approx[i].abs() > zero_tol).collect();
    let signs: Vec<f64> = support.iter().map(|&i| approx[i].signum()).collect();
    Ok(kkt.verify_pattern(&support, &signs))
}
