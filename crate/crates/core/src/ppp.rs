//! The outer projection proximal-point loop.
//!
//! Each outer step solves the regularized subproblem anchored at `uⁿ` to the
//! σ-accuracy, then projects `uⁿ` onto the hyperplane `{x : ⟨vⁿ, x − yⁿ⟩ = 0}`,
//! which separates `uⁿ` from the solution set.

use crate::error::{check_len, Error, Result};
use crate::inner::{solve_capped, InnerParams, SubproblemResult, Termination};
use crate::operators::Vector;
use crate::prox::{flush_subnormals, Problem};
use crate::trace::{RunStatus, SolverTrace, TraceRow};

/// Rule choosing `μₙ` for outer step `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MuSchedule {
    Constant(f64),
    /// `μₙ = max(floor, initial · factorⁿ)` with `0 < factor ≤ 1`.
    Decreasing {
        initial: f64,
        factor: f64,
        floor: f64,
    },
}

impl MuSchedule {
    pub fn mu(&self, n: usize) -> f64 {
        match *self {
            MuSchedule::Constant(mu) => mu,
            MuSchedule::Decreasing { initial, factor, floor } => {
                (initial * factor.powi(n.min(i32::MAX as usize) as i32)).max(floor)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            MuSchedule::Constant(mu) => mu > 0.0 && mu.is_finite(),
            MuSchedule::Decreasing { initial, factor, floor } => {
                initial.is_finite() && floor > 0.0 && floor <= initial && factor > 0.0 && factor <= 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "mu_schedule",
                format!("{self:?} is not positive and bounded"),
            ))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PppParams {
    /// Inner solver settings; `inner.mu` is replaced by the schedule each step.
    pub inner: InnerParams,
    pub mu_schedule: MuSchedule,
    pub max_outer_iters: usize,
    /// Stand-in for `vⁿ = 0`; defaults to `1e-9 · (1 + ‖K*g‖)`.
    pub v_tol: Option<f64>,
    /// Stand-in for `yⁿ = uⁿ`.
    pub y_tol: f64,
    /// Cap on inner iterations summed over all outer steps.
    pub total_iter_budget: Option<usize>,
}

impl PppParams {
    pub fn new(inner: InnerParams) -> Self {
        Self {
            inner,
            mu_schedule: MuSchedule::Constant(inner.mu),
            max_outer_iters: 10_000,
            v_tol: None,
            y_tol: 1e-12,
            total_iter_budget: None,
        }
    }
}

impl Default for PppParams {
    fn default() -> Self {
        Self::new(InnerParams::default())
    }
}

/// Everything known about one completed outer step, handed to observers.
///
/// All quantities refer to `problem`, the internally normalized instance.
pub struct OuterStep<'a> {
    pub n: usize,
    pub problem: &'a Problem,
    pub anchor: &'a Vector,
    pub mu: f64,
    pub sigma: f64,
    pub result: &'a SubproblemResult,
    /// `uⁿ⁺¹`, or `None` when this step terminated the run.
    pub next: Option<&'a Vector>,
}

#[derive(Clone, Debug)]
pub struct PppOutput {
    pub solution: Vector,
    pub trace: SolverTrace,
    /// Factor `c` of the internal rescaling `K/c, g/c, α/c²`.
    pub scale: f64,
}

/// Orthogonal projection of `u` onto `{x : ⟨v, x − y⟩ = 0}`.
pub fn project_hyperplane(u: &Vector, y: &Vector, v: &Vector) -> Result<Vector> {
    check_len("hyperplane point", u.len(), y.len())?;
    check_len("hyperplane normal", u.len(), v.len())?;
    let vv = v.norm_squared();
    if vv == 0.0 {
        return Err(Error::ZeroNormal);
    }
    let t = v.dot(&(u - y)) / vv;
    Ok(u - v * t)
}

pub fn run_ppp(p: &Problem, u0: &Vector, params: &PppParams) -> Result<PppOutput> {
    run_ppp_observed(p, u0, params, |_| {})
}

/// [`run_ppp`] with a callback invoked after every accepted subproblem solve.
pub fn run_ppp_observed<F>(p: &Problem, u0: &Vector, params: &PppParams, mut observer: F) -> Result<PppOutput>
where
    F: FnMut(&OuterStep<'_>),
{
    check_len("initial point", p.dim(), u0.len())?;
    if u0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial point"));
    }
    params.mu_schedule.validate()?;
    if params.y_tol < 0.0 || params.v_tol.is_some_and(|t| t < 0.0) {
        return Err(Error::invalid("tolerance", "must be non-negative"));
    }

    let normalized = p.normalized()?;
    let q = &normalized.problem;
    let op_norm = q.op_norm()?;
    let v_tol = match params.v_tol {
        Some(t) => t,
        None => 1e-9 * (1.0 + q.op().apply_adjoint(q.data())?.norm()),
    };

    let mut u = u0.clone();
    let mut rows = Vec::new();
    let mut used = 0usize;
    // `K·u − g` of the normalized problem, carried over from the projection
    let mut residual: Option<Vector> = None;
    let scale_sq = normalized.scale * normalized.scale;
    let mut status = RunStatus::MaxOuter;

    for n in 0..params.max_outer_iters {
        let remaining = params.total_iter_budget.map(|b| b.saturating_sub(used));
        if remaining == Some(0) {
            status = RunStatus::BudgetExhausted;
            break;
        }
        let inner = InnerParams {
            mu: params.mu_schedule.mu(n),
            ..params.inner
        };
        inner.validate(op_norm)?;

        let res = solve_capped(q, &u, &inner, &u, residual.take(), remaining)?;
        used += res.inner_iters;
        match res.terminated_by {
            Termination::SigmaTest => {}
            Termination::Budget => {
                status = RunStatus::BudgetExhausted;
                break;
            }
            Termination::MaxIters if res.cert.norm_v <= v_tol => {
                // already stationary; the σ-test is stuck at rounding level
                log::warn!("outer step {n}: accuracy test stalled at a stationary point");
            }
            Termination::MaxIters => {
                status = RunStatus::Aborted(format!(
                    "outer step {n}: inner solver reached {} iterations without passing the \
                     accuracy test (‖ε‖ = {:.3e}, ‖v‖ = {:.3e}, μ‖y − u‖ = {:.3e})",
                    res.inner_iters,
                    res.cert.norm_eps,
                    res.cert.norm_v,
                    inner.mu * res.step_norm
                ));
                break;
            }
        }

        let mut row = TraceRow {
            n,
            inner_iters: res.inner_iters,
            psi: f64::NAN,
            norm_v: res.cert.norm_v,
            norm_eps: res.cert.norm_eps,
            mu: inner.mu,
        };
        let separation = res.cert.v.dot(&(&u - &res.y));
        let stop = res.cert.norm_v <= v_tol || res.step_norm <= params.y_tol;
        if stop || separation <= 0.0 {
            if !stop {
                log::warn!("outer step {n}: hyperplane does not separate (⟨v, u − y⟩ = {separation:e}); stopping");
            }
            row.psi = p.objective(&res.y)?;
            rows.push(row);
            observer(&OuterStep {
                n,
                problem: q,
                anchor: &u,
                mu: inner.mu,
                sigma: inner.sigma,
                result: &res,
                next: None,
            });
            u = res.y;
            status = RunStatus::Converged;
            break;
        }

        let mut next = project_hyperplane(&u, &res.y, &res.cert.v)?;
        flush_subnormals(&mut next);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("projected iterate"));
        }
        let next_residual = q.residual(&next)?;
        // Ψ is invariant up to the factor c² under the rescaling
        row.psi = scale_sq * (0.5 * next_residual.norm_squared() + q.alpha() * next.lp_norm(1));
        residual = Some(next_residual);
        rows.push(row);
        observer(&OuterStep {
            n,
            problem: q,
            anchor: &u,
            mu: inner.mu,
            sigma: inner.sigma,
            result: &res,
            next: Some(&next),
        });
        log::debug!(
            "outer {n}: {} inner, psi = {:.6e}, |v| = {:.3e}",
            row.inner_iters,
            row.psi,
            row.norm_v
        );
        u = next;
    }

    Ok(PppOutput {
        solution: u,
        trace: SolverTrace { rows, status },
        scale: normalized.scale,
    })
}
