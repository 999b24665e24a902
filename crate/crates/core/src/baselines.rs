//! Plain iterated soft-thresholding `uᵏ⁺¹ = S_{sα}(uᵏ − s·K*(Kuᵏ − g))`.

use crate::error::{check_len, Error, Result};
use crate::operators::Vector;
use crate::prox::{certificate_from_gradient, shrink, Problem};
use crate::trace::{RunStatus, SolverTrace, TraceRow};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IstaParams {
    /// Step size in `(0, 2/‖K‖²)` of the normalized problem.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once `‖uᵏ⁺¹ − uᵏ‖ ≤ tol`.
    pub tol: f64,
}

impl Default for IstaParams {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            max_iters: 10_000,
            tol: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IstaOutput {
    pub solution: Vector,
    /// `Ψ(uᵏ)` after each iteration, in the caller's units.
    pub psi: Vec<f64>,
    /// Same data in the common trace schema: one inner iteration per row,
    /// `μ = 0`, and `norm_v = norm_eps = dist(0, T(uᵏ))` of the normalized problem.
    pub trace: SolverTrace,
    pub scale: f64,
}

pub fn ista_run(p: &Problem, u0: &Vector, params: &IstaParams) -> Result<IstaOutput> {
    check_len("initial point", p.dim(), u0.len())?;
    if u0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial point"));
    }
    if params.tol < 0.0 {
        return Err(Error::invalid("tol", "must be non-negative"));
    }
    let normalized = p.normalized()?;
    let q = &normalized.problem;
    let norm = q.op_norm()?;
    let s = params.step_size;
    if !(s > 0.0 && s < 2.0 / (norm * norm)) {
        return Err(Error::invalid("step_size", format!("{s} is outside (0, 2/‖K‖²)")));
    }
    let alpha = q.alpha();
    let scale_sq = normalized.scale * normalized.scale;

    let mut u = u0.clone();
    let mut residual = q.residual(&u)?;
    let mut grad = q.op().apply_adjoint(&residual)?;
    let mut psi = Vec::new();
    let mut rows = Vec::new();
    let mut status = RunStatus::BudgetExhausted;

    for k in 0..params.max_iters {
        let next = Vector::from_fn(u.len(), |i, _| shrink(u[i] - s * grad[i], s * alpha));
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("soft-thresholding iterate"));
        }
        let moved = (&next - &u).norm();
        u = next;
        residual = q.residual(&u)?;
        grad = q.op().apply_adjoint(&residual)?;

        // objective of the normalized problem times c² is the caller's objective
        let value = scale_sq * (0.5 * residual.norm_squared() + alpha * u.lp_norm(1));
        let stationarity = certificate_from_gradient(&grad, &u, &u, 1.0, alpha).norm_eps;
        psi.push(value);
        rows.push(TraceRow {
            n: k,
            inner_iters: 1,
            psi: value,
            norm_v: stationarity,
            norm_eps: stationarity,
            mu: 0.0,
        });
        if moved <= params.tol {
            status = RunStatus::Converged;
            break;
        }
    }

    Ok(IstaOutput {
        solution: u,
        psi,
        trace: SolverTrace { rows, status },
        scale: normalized.scale,
    })
}
