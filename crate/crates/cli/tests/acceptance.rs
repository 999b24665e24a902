//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p l1ppp-cli --test acceptance`; the process exits
//! nonzero when any criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use l1ppp::inner::{damped_ista_step, phi};
use l1ppp::oracle::{oracle_solve, refine_on_support};
use l1ppp::problems::{localized_particles, make_random_fbi_problem};
use l1ppp::{
    ista_run, run_ppp_observed, InnerMethod, InnerParams, IstaParams, LinearOperator, PppParams, Problem, Vector,
};
use l1ppp_cli::config::{ProblemConfig, SolverKind};
use l1ppp_cli::runner::{build_instance, run, solve, sweep_cells, SolverParams};
use l1ppp_cli::Config;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const METHODS: [InnerMethod; 2] = [InnerMethod::DampedIsta, InnerMethod::Gcg];

type Verdict = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_vector(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn dense_of(op: &LinearOperator) -> DMatrix<f64> {
    let n = op.domain_dim();
    let mut out = DMatrix::zeros(op.range_dim(), n);
    for j in 0..n {
        let mut e = Vector::zeros(n);
        e[j] = 1.0;
        out.set_column(j, &op.apply(&e).unwrap());
    }
    out
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn config(name: &str) -> Config {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Config::load(&path).unwrap_or_else(|e| panic!("{e}"))
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("l1ppp-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

/// Seeded instance whose minimizer (sparsity ≤ 3) is certified by support enumeration.
fn oracle_instance(m: usize, n: usize, seed: u64) -> (Problem, Vector) {
    for attempt in 0..1000u64 {
        let (p, _) = make_random_fbi_problem(m, n, 3.min(m / 2), 0.02, seed * 1000 + attempt).unwrap();
        if let Ok(star) = oracle_solve(&p, 3) {
            return (p, star);
        }
    }
    panic!("no certified instance for seed {seed}");
}

/// Independent re-check of an accepted inner solve on the instance `(K, g, α)`:
/// `v ∈ ∂(½‖K·−g‖² + α‖·‖₁)(y)` componentwise within 1e-10,
/// `v + μ(y − u) + ε = 0`, and `‖ε‖ ≤ σ max{‖v‖, μ‖y − u‖}`.
#[allow(clippy::too_many_arguments)]
fn check_step(
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
    let grad = k.transpose() * (k * y - g);
    for i in 0..y.len() {
        let s = v[i] - grad[i];
        let ok = if y[i] > 0.0 {
            (s - alpha).abs() <= 1e-10
        } else if y[i] < 0.0 {
            (s + alpha).abs() <= 1e-10
        } else {
            s.abs() <= alpha + 1e-10
        };
        if !ok {
            return Err(format!("v ∉ T(y) at component {i}"));
        }
    }
    let balance = v + (y - anchor) * mu + eps;
    let scale = 1.0 + v.amax() + eps.amax() + mu * (y - anchor).amax();
    if balance.amax() > 1e-12 * scale {
        return Err(format!("v + μ(y − u) + ε = {:e}", balance.amax()));
    }
    let bound = sigma * v.norm().max(mu * (y - anchor).norm());
    if eps.norm() > bound {
        return Err(format!("‖ε‖ = {:e} > {bound:e}", eps.norm()));
    }
    Ok(())
}

/// Criteria 1, 2 and 4 share the same 50 runs.
struct OracleRuns {
    worst_distance: f64,
    seconds: f64,
    failures: Vec<String>,
    steps_checked: usize,
    unsound: Vec<String>,
    worst_fejer: f64,
}

fn oracle_runs() -> OracleRuns {
    let shapes = [(8, 12), (7, 11), (6, 10), (8, 9), (5, 12)];
    let instances: Vec<(Problem, Vector)> = (0..25)
        .map(|s| oracle_instance(shapes[s % 5].0, shapes[s % 5].1, s as u64))
        .collect();
    let mut out = OracleRuns {
        worst_distance: 0.0,
        seconds: 0.0,
        failures: Vec::new(),
        steps_checked: 0,
        unsound: Vec::new(),
        worst_fejer: f64::NEG_INFINITY,
    };
    for (i, (p, star)) in instances.iter().enumerate() {
        for method in METHODS {
            let mut params = PppParams::new(InnerParams {
                method,
                sigma: 0.9,
                mu: 0.05,
                ..InnerParams::default()
            });
            params.total_iter_budget = Some(50_000);
            let mut dense = None;
            let start = Instant::now();
            let mut steps = Vec::new();
            let result = run_ppp_observed(p, &Vector::zeros(p.dim()), &params, |st| {
                let r = st.result;
                steps.push((
                    st.problem.clone(),
                    st.anchor.clone(),
                    r.y.clone(),
                    r.cert.v.clone(),
                    r.cert.eps.clone(),
                    st.mu,
                    st.sigma,
                    st.next.cloned(),
                ));
            });
            out.seconds += start.elapsed().as_secs_f64();
            let result = match result {
                Ok(r) => r,
                Err(e) => {
                    out.failures.push(format!("instance {i} {method:?}: {e}"));
                    continue;
                }
            };
            let d = (&result.solution - star).norm();
            out.worst_distance = out.worst_distance.max(d);
            if !result.trace.status.is_success() {
                out.failures
                    .push(format!("instance {i} {method:?}: {}", result.trace.status));
            }
            if d > 1e-6 {
                out.failures.push(format!("instance {i} {method:?}: distance {d:e}"));
            }
            for (q, anchor, y, v, eps, mu, sigma, next) in steps {
                let k = dense.get_or_insert_with(|| dense_of(q.op()));
                out.steps_checked += 1;
                if let Err(e) = check_step(k, q.data(), q.alpha(), &y, &anchor, &v, &eps, mu, sigma) {
                    out.unsound.push(format!("instance {i} {method:?}: {e}"));
                }
                if let Some(next) = next {
                    let excess = (&next - star).norm() - (&anchor - star).norm();
                    out.worst_fejer = out.worst_fejer.max(excess);
                }
            }
        }
    }
    out
}

fn criterion_1(runs: &OracleRuns) -> Verdict {
    let detail = format!(
        "50 runs, max ‖u − u*‖ = {:.2e}, solver time {:.2} s",
        runs.worst_distance, runs.seconds
    );
    if runs.failures.is_empty() && runs.seconds < 10.0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; {:?}", runs.failures))
    }
}

fn criterion_2(runs: &OracleRuns) -> Verdict {
    let detail = format!("{} inner terminations re-verified", runs.steps_checked);
    if runs.unsound.is_empty() && runs.steps_checked > 0 {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; {} violations, first: {:?}",
            runs.unsound.len(),
            runs.unsound.first()
        ))
    }
}

fn criterion_4(runs: &OracleRuns) -> Verdict {
    let detail = format!("max ‖uⁿ⁺¹ − u*‖ − ‖uⁿ − u*‖ = {:.2e}", runs.worst_fejer);
    if runs.worst_fejer <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Random `m × n` instance with `‖K‖ = 1` and a random anchor.
fn subproblem_instance(m: usize, n: usize, seed: u64) -> (Problem, DMatrix<f64>, Vector) {
    let mut r = rng(seed);
    let mut k = DMatrix::from_fn(m, n, |_, _| r.sample(StandardNormal));
    k /= k.singular_values().max();
    let g = gaussian_vector(m, &mut r);
    let anchor = gaussian_vector(n, &mut r);
    let p = Problem::new(LinearOperator::dense(k.clone()).unwrap(), g, 0.05).unwrap();
    (p, k, anchor)
}

/// Subproblem minimizer by damped soft-thresholding, up to 10⁶ iterations or
/// an exact fixed point.
fn subproblem_reference(k: &DMatrix<f64>, g: &Vector, alpha: f64, mu: f64, anchor: &Vector) -> Vector {
    let mut y = anchor.clone();
    for _ in 0..1_000_000 {
        let grad = k.transpose() * (k * &y - g);
        let next = Vector::from_fn(y.len(), |i, _| {
            let x = y[i] - grad[i] + mu * anchor[i];
            let shrunk = if x > alpha {
                x - alpha
            } else if x < -alpha {
                x + alpha
            } else {
                0.0
            };
            shrunk / (1.0 + mu)
        });
        let done = next == y;
        y = next;
        if done {
            break;
        }
    }
    y
}

fn criterion_3() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut ratios = 0;
    for seed in 0..10 {
        let (p, k, anchor) = subproblem_instance(12, 8, 300 + seed);
        for mu in [0.05, 0.2, 1.0] {
            let star = subproblem_reference(&k, p.data(), p.alpha(), mu, &anchor);
            let mut y = gaussian_vector(8, &mut rng(900 + seed)) * 3.0;
            let mut err = (&y - &star).norm();
            while err > 1e-10 {
                y = damped_ista_step(&p, &y, &anchor, mu, 1.0).unwrap();
                let next = (&y - &star).norm();
                worst = worst.max(next / err - 1.0 / (1.0 + mu));
                ratios += 1;
                err = next;
            }
        }
    }
    let detail = format!("{ratios} step ratios, max ratio − (1+μ)⁻¹ = {worst:.2e}");
    if worst <= 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Verdict {
    let (p, _) = make_random_fbi_problem(20, 40, 4, 1e-2, 1).unwrap();
    let long = ista_run(
        &p,
        &Vector::zeros(40),
        &IstaParams {
            max_iters: 200_000,
            ..IstaParams::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let star = refine_on_support(&p, &long.solution, 1e-9)
        .map_err(|e| e.to_string())?
        .ok_or("support not identified")?;
    let mut details = Vec::new();
    let mut ok = true;
    for method in METHODS {
        let params = PppParams::new(InnerParams {
            method,
            sigma: 0.5,
            mu: 0.01,
            ..InnerParams::default()
        });
        let mut errors = vec![star.norm()];
        run_ppp_observed(&p, &Vector::zeros(40), &params, |st| {
            if let Some(next) = st.next {
                errors.push((next - &star).norm());
            }
        })
        .map_err(|e| e.to_string())?;
        let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
        if ratios.len() < 10 {
            ok = false;
            details.push(format!("{method:?}: only {} ratios", ratios.len()));
            continue;
        }
        let tail = &ratios[ratios.len() - 10..];
        let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let med = median(tail);
        ok &= max <= 0.999 && med <= 0.95;
        details.push(format!("{method:?}: max {max:.3}, median {med:.3}"));
    }
    if ok {
        Ok(details.join("; "))
    } else {
        Err(details.join("; "))
    }
}

fn criterion_6() -> Verdict {
    let mut worst = f64::INFINITY;
    for seed in 0..10u64 {
        let mu = [0.05, 0.2, 1.0][seed as usize % 3];
        let (p, k, anchor) = subproblem_instance(6, 9, 600 + seed);
        let star = subproblem_reference(&k, p.data(), p.alpha(), mu, &anchor);
        let grad = p.gradient(&star).unwrap();
        let phi_star = phi(p.alpha(), &star, &anchor, mu);
        let mut r = rng(700 + seed);
        for _ in 0..100 {
            let v = &star + gaussian_vector(9, &mut r) * r.random_range(0.01..3.0);
            let lhs = grad.dot(&(&v - &star)) + phi(p.alpha(), &v, &anchor, mu) - phi_star;
            worst = worst.min(lhs - 0.5 * mu * (&v - &star).norm_squared());
        }
    }
    let detail = format!("1000 points, min LHS − (μ/2)‖v − y*‖² = {worst:.2e}");
    if worst >= -1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Outer count, per-step inner counts and final Ψ of one deconvolution cell.
fn deconv_cell(solver: SolverKind, mu: f64, sigma: f64) -> (usize, Vec<f64>, f64) {
    let c = config("deconv_default.toml");
    let instance = build_instance(&c).unwrap();
    let ppp = c.ppp.as_ref().unwrap();
    let method = if solver == SolverKind::PppGcg {
        InnerMethod::Gcg
    } else {
        InnerMethod::DampedIsta
    };
    let mut params = ppp.params(method, mu, sigma);
    params.total_iter_budget = Some(350);
    let out = solve(&instance.problem, &SolverParams::Ppp(params)).unwrap();
    let inner = out.trace.rows.iter().map(|r| r.inner_iters as f64).collect();
    let psi = out.final_psi(&instance.problem).unwrap();
    (out.trace.outer_iters(), inner, psi)
}

fn criterion_7() -> Verdict {
    let s = SolverKind::PppIsta;
    let (outer_09, _, psi_02) = deconv_cell(s, 0.2, 0.9);
    let (outer_01, inner_02, _) = deconv_cell(s, 0.2, 0.1);
    let (_, inner_001, _) = deconv_cell(s, 0.01, 0.1);
    let (_, _, psi_001) = deconv_cell(s, 0.01, 0.9);
    let a = outer_09 >= 5 * outer_01;
    let (m001, m02) = (median(&inner_001), median(&inner_02));
    let b = m001 > m02;
    let c = psi_001 <= psi_02;
    let detail = format!(
        "(a) outer {outer_09} vs {outer_01} {}; (b) median inner {m001} vs {m02} {}; (c) Ψ {psi_001:.9e} vs {psi_02:.9e} {}",
        mark(a),
        mark(b),
        mark(c)
    );
    if a && b && c {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn criterion_8() -> Verdict {
    let c = config("deconv_default.toml");
    let instance = build_instance(&c).unwrap();
    let mut ista_psi = None;
    let mut gcg = Vec::new();
    for (cell, params) in sweep_cells(&c).map_err(|e| e.to_string())? {
        let out = solve(&instance.problem, &params).map_err(|e| e.to_string())?;
        let psi = out.final_psi(&instance.problem).unwrap();
        match cell.solver {
            SolverKind::Ista => ista_psi = Some(psi),
            SolverKind::PppGcg => gcg.push((cell.mu.unwrap(), cell.sigma.unwrap(), psi)),
            SolverKind::PppIsta => {}
        }
    }
    let ista_psi = ista_psi.ok_or("no ista cell in the shipped sweep")?;
    let worst = gcg.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let detail = format!(
        "{} ppp_gcg cells, worst Ψ {worst:.12e} vs ISTA {ista_psi:.12e}",
        gcg.len()
    );
    if !gcg.is_empty() && gcg.iter().all(|c| c.2 <= ista_psi + 1e-9) {
        Ok(detail)
    } else {
        Err(format!("{detail}: {gcg:?}"))
    }
}

fn criterion_9() -> Verdict {
    let c = config("hologram.toml");
    let ProblemConfig::Hologram(h) = &c.problem else {
        return Err("hologram.toml is not a hologram problem".into());
    };
    let start = Instant::now();
    let instance = build_instance(&c).unwrap();
    let spec = instance.hologram.as_ref().unwrap();
    let ppp = c.ppp.as_ref().unwrap();
    let out = solve(
        &instance.problem,
        &SolverParams::Ppp(ppp.params(InnerMethod::Gcg, ppp.mu, ppp.sigma)),
    )
    .map_err(|e| e.to_string())?;
    let seconds = start.elapsed().as_secs_f64();
    let found = localized_particles(spec, &out.solution, 1.0);
    let detail = format!(
        "{}×{} px, {} particles, noise {}: {found}/{} localized in {seconds:.1} s",
        spec.image_size,
        spec.image_size,
        spec.particles.len(),
        h.noise_sigma.unwrap_or(0.0),
        spec.particles.len()
    );
    let expected = spec.image_size == 64
        && spec.particles.len() == 20
        && spec.noise_sigma == 0.0
        && spec.wavelength == 630e-9
        && spec.distance == 0.25;
    if expected && found >= 18 && seconds < 60.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_10() -> Verdict {
    let mut checked = Vec::new();
    for name in ["deconv_default.toml", "random_fbi.toml", "hologram.toml"] {
        let mut c = config(name);
        if let Some(ppp) = c.ppp.as_mut() {
            // the full hologram budget is exercised by criterion 9
            ppp.total_iter_budget = Some(ppp.total_iter_budget.unwrap_or(usize::MAX).min(1000));
        }
        let (a, b) = (scratch_dir(&format!("{name}-a")), scratch_dir(&format!("{name}-b")));
        run(&c, &a).map_err(|e| e.to_string())?;
        run(&c, &b).map_err(|e| e.to_string())?;
        let ta = std::fs::read(a.join("trace.csv")).map_err(|e| e.to_string())?;
        let tb = std::fs::read(b.join("trace.csv")).map_err(|e| e.to_string())?;
        let _ = std::fs::remove_dir_all(&a);
        let _ = std::fs::remove_dir_all(&b);
        if ta != tb {
            return Err(format!("{name}: traces differ"));
        }
        checked.push(format!("{name} ({} bytes)", ta.len()));
    }
    Ok(format!("byte-identical trace.csv for {}", checked.join(", ")))
}

fn main() -> ExitCode {
    let runs = oracle_runs();
    let criteria: Vec<(&str, Check)> = vec![
        ("oracle equivalence", Box::new(|| criterion_1(&runs))),
        ("certificate soundness", Box::new(|| criterion_2(&runs))),
        ("contraction rate", Box::new(criterion_3)),
        ("Fejér monotonicity", Box::new(|| criterion_4(&runs))),
        ("Q-linear tail", Box::new(criterion_5)),
        ("Bregman estimate", Box::new(criterion_6)),
        ("parameter study pattern", Box::new(criterion_7)),
        ("GCG vs ISTA", Box::new(criterion_8)),
        ("holography localization", Box::new(criterion_9)),
        ("determinism", Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all {} criteria pass", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
