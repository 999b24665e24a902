#![allow(dead_code)]

use l1ppp::{LinearOperator, Problem, Vector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_matrix(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

/// Random dense instance with `‖K‖ = 1`.
pub fn unit_norm_problem(m: usize, n: usize, alpha: f64, seed: u64) -> (Problem, DMatrix<f64>) {
    let mut rng = rng(seed);
    let mut k = gaussian_matrix(m, n, &mut rng);
    k /= k.singular_values().max();
    let g = gaussian_vector(m, &mut rng);
    let p = Problem::new(LinearOperator::dense(k.clone()).unwrap(), g, alpha).unwrap();
    (p, k)
}

/// Materializes an operator column by column.
pub fn dense_of(op: &LinearOperator) -> DMatrix<f64> {
    let n = op.domain_dim();
    let mut out = DMatrix::zeros(op.range_dim(), n);
    for j in 0..n {
        let mut e = Vector::zeros(n);
        e[j] = 1.0;
        out.set_column(j, &op.apply(&e).unwrap());
    }
    out
}

pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Scalar soft-thresholding written out from the case table.
pub fn shrink_ref(x: f64, c: f64) -> f64 {
    if x > c {
        x - c
    } else if x < -c {
        x + c
    } else {
        0.0
    }
}

/// `v − K*(Ky − g) ∈ αSign(y)` componentwise, with the given tolerance.
pub fn in_operator_image(
    k: &DMatrix<f64>,
    g: &Vector,
    alpha: f64,
    y: &Vector,
    v: &Vector,
    tol: f64,
) -> Result<(), String> {
    let grad = k.transpose() * (k * y - g);
    for i in 0..y.len() {
        let s = v[i] - grad[i];
        let ok = if y[i] != 0.0 {
            (s - alpha * sign(y[i])).abs() <= tol
        } else {
            s.abs() <= alpha + tol
        };
        if !ok {
            return Err(format!("component {i}: y = {:e}, v − ∇ = {:e}, α = {alpha:e}", y[i], s));
        }
    }
    Ok(())
}

/// Re-checks the three inexactness conditions for an accepted inner solve:
/// `v ∈ T(y)`, `v + μ(y − anchor) + ε = 0`, `‖ε‖ ≤ σ max{‖v‖, μ‖y − anchor‖}`.
#[allow(clippy::too_many_arguments)]
pub fn check_inexactness(
    k: &DMatrix<f64>,
    g: &Vector,
    alpha: f64,
    y: &Vector,
    anchor: &Vector,
    v: &Vector,
    eps: &Vector,
    mu: f64,
    sigma: f64,
) -> Result<(), String> {
    in_operator_image(k, g, alpha, y, v, 1e-10)?;
    let balance = v + (y - anchor) * mu + eps;
    let scale = 1.0 + v.amax() + eps.amax() + mu * (y - anchor).amax();
    if balance.amax() > 1e-12 * scale {
        return Err(format!("v + μ(y − u) + ε = {:e} ≠ 0", balance.amax()));
    }
    let bound = sigma * v.norm().max(mu * (y - anchor).norm());
    if eps.norm() > bound {
        return Err(format!("‖ε‖ = {:e} exceeds {bound:e}", eps.norm()));
    }
    Ok(())
}

/// Minimizer of `½‖Ku − g‖² + α‖u‖₁ + (μ/2)‖u − anchor‖²` by damped
/// soft-thresholding iterated to an exact fixed point (contraction `1/(1+μ)`).
pub fn subproblem_reference(k: &DMatrix<f64>, g: &Vector, alpha: f64, mu: f64, anchor: &Vector) -> Vector {
    let mut y = anchor.clone();
    for _ in 0..1_000_000 {
        let grad = k.transpose() * (k * &y - g);
        let next = Vector::from_fn(y.len(), |i, _| {
            shrink_ref(y[i] - grad[i] + mu * anchor[i], alpha) / (1.0 + mu)
        });
        if (&next - &y).norm() <= 1e-16 * (1.0 + y.norm()) {
            y = next;
            break;
        }
        y = next;
    }
    y
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Property-test settings; failing cases are reported with their inputs
/// rather than persisted next to the sources.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        failure_persistence: None,
        ..proptest::test_runner::Config::default()
    }
}

/// Seeded random instance whose ℓ¹ minimizer is certified by support
/// enumeration to have at most `max_support` nonzeros (exactly that many when
/// `exact`). Tries successive sub-seeds until one qualifies.
pub fn oracle_instance(m: usize, n: usize, max_support: usize, exact: bool, seed: u64) -> (Problem, Vector) {
    use l1ppp::oracle::oracle_solve;
    use l1ppp::problems::make_random_fbi_problem;
    for attempt in 0..1000u64 {
        let sub = seed.wrapping_mul(1000).wrapping_add(attempt);
        let sparsity = max_support.min(m / 2);
        let (p, _) = make_random_fbi_problem(m, n, sparsity, 0.02, sub).unwrap();
        if let Ok(star) = oracle_solve(&p, max_support) {
            let nnz = star.iter().filter(|x| **x != 0.0).count();
            if !exact || nnz == max_support {
                return (p, star);
            }
        }
    }
    panic!("no qualifying instance for seed {seed}");
}
