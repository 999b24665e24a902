//! Coordinate-wise primitives: soft-thresholding, projection onto `α·Sign(y)`,
//! objective evaluation and the `(v, ε)` inexactness certificate.

use std::sync::OnceLock;

use crate::error::{check_len, Error, Result};
use crate::operators::{LinearOperator, Vector};

/// Iterations and relative tolerance used for the cached operator norm.
const NORM_ITERS: usize = 2000;
const NORM_TOL: f64 = 1e-10;
/// Margin applied when rescaling to a sub-unit-norm operator.
const RESCALE_MARGIN: f64 = 1.01;

/// An instance of `min_u ½‖Ku − g‖² + α‖u‖₁`.
#[derive(Clone, Debug)]
pub struct Problem {
    op: LinearOperator,
    data: Vector,
    alpha: f64,
    norm: OnceLock<f64>,
}

/// A problem rescaled so that its operator norm is at most one, together with
/// the factor `c` used: `K/c`, `g/c`, `α/c²`. Minimizers are unchanged and
/// objective values scale by `1/c²`.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub problem: Problem,
    pub scale: f64,
}

impl Problem {
    pub fn new(op: LinearOperator, data: Vector, alpha: f64) -> Result<Self> {
        check_len("problem data", op.range_dim(), data.len())?;
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(
                "alpha",
                format!("must be positive and finite, got {alpha}"),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("problem data"));
        }
        Ok(Self {
            op,
            data,
            alpha,
            norm: OnceLock::new(),
        })
    }

    pub fn op(&self) -> &LinearOperator {
        &self.op
    }

    pub fn data(&self) -> &Vector {
        &self.data
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.op.domain_dim()
    }

    /// Cached power-iteration estimate of `‖K‖`.
    pub fn op_norm(&self) -> Result<f64> {
        if let Some(n) = self.norm.get() {
            return Ok(*n);
        }
        let est = self.op.estimate_norm(NORM_ITERS, NORM_TOL)?;
        if !est.converged {
            log::warn!(
                "operator norm estimate did not converge after {} iterations",
                est.iterations
            );
        }
        Ok(*self.norm.get_or_init(|| est.value))
    }

    /// Rescales by `c = 1.01·‖K‖` when the estimated norm exceeds one.
    pub fn normalized(&self) -> Result<Normalized> {
        let norm = self.op_norm()?;
        if norm <= 1.0 + 1e-12 {
            return Ok(Normalized {
                problem: self.clone(),
                scale: 1.0,
            });
        }
        let c = RESCALE_MARGIN * norm;
        let problem = Problem::new(
            LinearOperator::scaled(1.0 / c, self.op.clone())?,
            &self.data / c,
            self.alpha / (c * c),
        )?;
        let _ = problem.norm.set(norm / c);
        Ok(Normalized { problem, scale: c })
    }

    /// `Ku − g`.
    pub fn residual(&self, u: &Vector) -> Result<Vector> {
        Ok(self.op.apply(u)? - &self.data)
    }

    /// `K*(Ku − g)`, the gradient of the quadratic term.
    pub fn gradient(&self, u: &Vector) -> Result<Vector> {
        self.op.apply_adjoint(&self.residual(u)?)
    }

    /// `Ψ(u) = ½‖Ku − g‖² + α‖u‖₁`.
    pub fn objective(&self, u: &Vector) -> Result<f64> {
        let r = self.residual(u)?;
        Ok(0.5 * r.norm_squared() + self.alpha * u.lp_norm(1))
    }

    /// `Ψ(u) + (μ/2)‖u − anchor‖²`.
    pub fn regularized_objective(&self, u: &Vector, mu: f64, anchor: &Vector) -> Result<f64> {
        check_positive("mu", mu)?;
        check_len("anchor", u.len(), anchor.len())?;
        Ok(self.objective(u)? + 0.5 * mu * (u - anchor).norm_squared())
    }

    /// Builds the certificate `(v, ε)` for `y` as an approximate solution of the
    /// subproblem anchored at `anchor`.
    pub fn certificate(&self, y: &Vector, anchor: &Vector, mu: f64) -> Result<Certificate> {
        check_positive("mu", mu)?;
        check_len("anchor", y.len(), anchor.len())?;
        let grad = self.gradient(y)?;
        Ok(certificate_from_gradient(&grad, y, anchor, mu, self.alpha))
    }
}

fn check_positive(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {x}")))
    }
}

/// `S_c(x)` for a single coordinate.
#[inline]
pub fn shrink(x: f64, c: f64) -> f64 {
    if x > c {
        x - c
    } else if x < -c {
        x + c
    } else {
        0.0
    }
}

/// Soft-thresholding `S_c = (id + c·Sign)⁻¹`, applied componentwise.
/// Replaces subnormal entries by exact zeros.
///
/// Repeated convex combinations and projections shrink inactive coordinates
/// geometrically; once subnormal they slow down every later transform while
/// contributing nothing above `f64::MIN_POSITIVE`.
pub(crate) fn flush_subnormals(x: &mut Vector) {
    for xi in x.iter_mut() {
        if xi.is_subnormal() {
            *xi = 0.0;
        }
    }
}

pub fn soft_threshold(u: &Vector, c: f64) -> Result<Vector> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::invalid("threshold", format!("must be non-negative, got {c}")));
    }
    Ok(u.map(|x| shrink(x, c)))
}

/// Projection of `u` onto the set `α·Sign(y)`.
///
/// Zero coordinates of `y` are detected by exact comparison; soft-thresholding
/// produces exact zeros.
pub fn sign_set_projection(y: &Vector, u: &Vector, alpha: f64) -> Vector {
    Vector::from_iterator(
        y.len(),
        y.iter()
            .zip(u.iter())
            .map(|(&yi, &ui)| project_coordinate(yi, ui, alpha)),
    )
}

#[inline]
fn project_coordinate(yi: f64, ui: f64, alpha: f64) -> f64 {
    if yi > 0.0 {
        alpha
    } else if yi < 0.0 {
        -alpha
    } else {
        ui.clamp(-alpha, alpha)
    }
}

/// Inexactness certificate of an approximate subproblem solution `y`:
/// `v ∈ T(y) = K*(Ky − g) + α·Sign(y)` and `v + μ(y − anchor) + ε = 0`.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub v: Vector,
    pub eps: Vector,
    pub norm_v: f64,
    pub norm_eps: f64,
}

impl Certificate {
    /// The acceptance test `‖ε‖ ≤ σ·max{‖v‖, μ‖y − anchor‖}`.
    pub fn passes(&self, sigma: f64, mu: f64, step_norm: f64) -> bool {
        self.norm_eps <= sigma * self.norm_v.max(mu * step_norm)
    }
}

/// Certificate for `y` given the precomputed gradient `K*(Ky − g)`.
pub(crate) fn certificate_from_gradient(
    grad: &Vector,
    y: &Vector,
    anchor: &Vector,
    mu: f64,
    alpha: f64,
) -> Certificate {
    let n = y.len();
    let mut v = Vector::zeros(n);
    let mut eps = Vector::zeros(n);
    for i in 0..n {
        let prox_pull = -mu * (y[i] - anchor[i]);
        let r = -grad[i] + prox_pull;
        let e = r - project_coordinate(y[i], r, alpha);
        eps[i] = e;
        v[i] = prox_pull - e;
    }
    let norm_v = v.norm();
    let norm_eps = eps.norm();
    Certificate {
        v,
        eps,
        norm_v,
        norm_eps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn scalar_problem(g: f64, alpha: f64) -> Problem {
        Problem::new(LinearOperator::identity(1), v(&[g]), alpha).unwrap()
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(
            soft_threshold(&v(&[2.0, 0.5, -3.0]), 1.0).unwrap(),
            v(&[1.0, 0.0, -2.0])
        );
        let u = v(&[0.1, -7.0, 0.0]);
        assert_eq!(soft_threshold(&u, 0.0).unwrap(), u);
        assert_eq!(soft_threshold(&v(&[1.0]), 1.0).unwrap(), v(&[0.0]));
        assert!(soft_threshold(&u, -0.1).is_err());
    }

    #[test]
    fn objective_by_hand() {
        let p = Problem::new(LinearOperator::identity(2), Vector::zeros(2), 1.0).unwrap();
        assert_eq!(p.objective(&v(&[1.0, -1.0])).unwrap(), 3.0);

        let g = v(&[1.0, -2.0, 0.5]);
        let p = Problem::new(LinearOperator::identity(3), g.clone(), 0.7).unwrap();
        assert_eq!(p.objective(&Vector::zeros(3)).unwrap(), 0.5 * g.norm_squared());
    }

    #[test]
    fn regularized_objective_by_hand() {
        let p = scalar_problem(0.0, 1.0);
        let r = p.regularized_objective(&v(&[1.0]), 2.0, &v(&[0.0])).unwrap();
        assert_eq!(r, 2.5);
        let u = v(&[0.3]);
        assert_eq!(p.regularized_objective(&u, 5.0, &u).unwrap(), p.objective(&u).unwrap());
        assert!(p.regularized_objective(&u, 0.0, &u).is_err());
        assert!(p.regularized_objective(&u, 1.0, &v(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn sign_projection_case_table() {
        let out = sign_set_projection(&v(&[1.0, 0.0, 0.0]), &v(&[5.0, 0.5, 2.0]), 1.0);
        assert_eq!(out, v(&[1.0, 0.5, 1.0]));
        let u = v(&[0.2, -0.3, 1.0, -1.0]);
        assert_eq!(sign_set_projection(&Vector::zeros(4), &u, 1.0), u);
        assert_eq!(sign_set_projection(&v(&[-2.0]), &v(&[99.0]), 0.3), v(&[-0.3]));
        assert_eq!(sign_set_projection(&v(&[0.0]), &v(&[-4.0]), 0.3), v(&[-0.3]));
    }

    #[test]
    fn certificate_scalar_hand_evaluation() {
        // r = -(1 - 2) - 1 = 0; y > 0 so P(r) = α = 0.5; ε = -0.5; v = -1 + 0.5
        let p = scalar_problem(2.0, 0.5);
        let cert = p.certificate(&v(&[1.0]), &v(&[0.0]), 1.0).unwrap();
        assert!((cert.eps[0] + 0.5).abs() < 1e-15);
        assert!((cert.v[0] + 0.5).abs() < 1e-15);
        let in_t = p.gradient(&v(&[1.0])).unwrap()[0] + 0.5;
        assert!((cert.v[0] - in_t).abs() < 1e-15);
    }

    #[test]
    fn certificate_interior_case_has_zero_eps() {
        let p = Problem::new(LinearOperator::identity(2), v(&[0.3, -0.2]), 0.5).unwrap();
        let y = Vector::zeros(2);
        let cert = p.certificate(&y, &y, 1.0).unwrap();
        // v = −μ(y − anchor) − ε = 0, the zero subgradient K*(Ky − g) + P(r) = −r + r
        assert_eq!(cert.norm_eps, 0.0);
        assert_eq!(cert.norm_v, 0.0);
    }

    #[test]
    fn certificate_at_exact_subproblem_minimizer() {
        // min ½(u−2)² + ½|u| + ½u² has minimizer 0.75
        let p = scalar_problem(2.0, 0.5);
        let cert = p.certificate(&v(&[0.75]), &v(&[0.0]), 1.0).unwrap();
        assert!(cert.norm_eps < 1e-15);
    }

    #[test]
    fn normalization_preserves_minimizer_and_scales_objective() {
        let k = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 2.0]);
        let p = Problem::new(LinearOperator::dense(k).unwrap(), v(&[1.0, 2.0]), 0.1).unwrap();
        let n = p.normalized().unwrap();
        assert!(n.scale > 1.0);
        assert!(n.problem.op_norm().unwrap() <= 1.0);
        let u = v(&[0.4, -0.2]);
        let ratio = p.objective(&u).unwrap() / n.problem.objective(&u).unwrap();
        assert!((ratio - n.scale * n.scale).abs() < 1e-10 * ratio);
    }

    #[test]
    fn small_operator_is_not_rescaled() {
        let p = Problem::new(
            LinearOperator::dense(DMatrix::identity(2, 2) * 0.5).unwrap(),
            v(&[1.0, 0.0]),
            0.1,
        )
        .unwrap();
        assert_eq!(p.normalized().unwrap().scale, 1.0);
    }

    #[test]
    fn problem_validation() {
        let op = LinearOperator::identity(2);
        assert!(Problem::new(op.clone(), v(&[1.0]), 1.0).is_err());
        assert!(Problem::new(op.clone(), v(&[1.0, 2.0]), 0.0).is_err());
        assert!(Problem::new(op, v(&[1.0, f64::INFINITY]), 1.0).is_err());
    }
}
