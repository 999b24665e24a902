//! WebAssembly bindings for the browser demo in `www/`: a deconvolution run,
//! a solver comparison, and a hologram reconstruction.
//!
//! The plain functions ([`deconvolve`], [`compare`], [`hologram`]) are
//! ordinary Rust and testable natively; the `#[wasm_bindgen]` exports wrap
//! them and turn errors into JavaScript exceptions.

use l1ppp::problems::{
    localized_particles, make_deconvolution_problem, make_hologram_problem, random_particles, DeconvSpec, HologramSpec,
};
use l1ppp::{
    ista_run, run_ppp, InnerMethod, InnerParams, IstaParams, LinearOperator, PppParams, Problem, SolverTrace, Vector,
};
use wasm_bindgen::prelude::*;

pub const SOLVERS: [&str; 3] = ["ppp_ista", "ppp_gcg", "ista"];

fn solve(problem: &Problem, solver: &str, mu: f64, sigma: f64, budget: usize) -> Result<(Vector, SolverTrace), String> {
    let u0 = Vector::zeros(problem.dim());
    let method = match solver {
        "ppp_ista" => InnerMethod::DampedIsta,
        "ppp_gcg" => InnerMethod::Gcg,
        "ista" => {
            let params = IstaParams {
                max_iters: budget,
                ..IstaParams::default()
            };
            let out = ista_run(problem, &u0, &params).map_err(|e| e.to_string())?;
            return Ok((out.solution, out.trace));
        }
        other => return Err(format!("unknown solver `{other}`")),
    };
    let mut params = PppParams::new(InnerParams {
        method,
        mu,
        sigma,
        ..InnerParams::default()
    });
    params.total_iter_budget = Some(budget);
    let out = run_ppp(problem, &u0, &params).map_err(|e| e.to_string())?;
    Ok((out.solution, out.trace))
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.as_slice().to_vec()
}

/// One solve of the default deconvolution problem.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Deconvolution {
    coeffs_truth: Vec<f64>,
    coeffs_solution: Vec<f64>,
    data: Vec<f64>,
    signal_truth: Vec<f64>,
    signal_solution: Vec<f64>,
    psi: Vec<f64>,
    outer_iters: usize,
    inner_iters: usize,
    status: String,
}

#[wasm_bindgen]
impl Deconvolution {
    /// Ground-truth hat coefficients.
    #[wasm_bindgen(getter)]
    pub fn coeffs_truth(&self) -> Vec<f64> {
        self.coeffs_truth.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn coeffs_solution(&self) -> Vec<f64> {
        self.coeffs_solution.clone()
    }
    /// Blurred (and possibly noisy) measurements on the fine grid.
    #[wasm_bindgen(getter)]
    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }
    /// Unblurred signal synthesized from the true coefficients.
    #[wasm_bindgen(getter)]
    pub fn signal_truth(&self) -> Vec<f64> {
        self.signal_truth.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn signal_solution(&self) -> Vec<f64> {
        self.signal_solution.clone()
    }
    /// `Ψ(uⁿ)` per outer iteration.
    #[wasm_bindgen(getter)]
    pub fn psi(&self) -> Vec<f64> {
        self.psi.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn outer_iters(&self) -> usize {
        self.outer_iters
    }
    #[wasm_bindgen(getter)]
    pub fn inner_iters(&self) -> usize {
        self.inner_iters
    }
    #[wasm_bindgen(getter)]
    pub fn status(&self) -> String {
        self.status.clone()
    }
}

pub fn deconvolve(
    solver: &str,
    mu: f64,
    sigma: f64,
    budget: usize,
    noise: f64,
    seed: u64,
) -> Result<Deconvolution, String> {
    let spec = DeconvSpec {
        noise_sigma: noise,
        ..DeconvSpec::default()
    };
    let (problem, truth) = make_deconvolution_problem(&spec, seed).map_err(|e| e.to_string())?;
    let (solution, trace) = solve(&problem, solver, mu, sigma, budget)?;
    let synthesis = LinearOperator::hat_synthesis(spec.n_coeffs, spec.grid_size).map_err(|e| e.to_string())?;
    let signal = |c: &Vector| synthesis.apply(c).map(|s| to_vec(&s)).map_err(|e| e.to_string());
    Ok(Deconvolution {
        signal_truth: signal(&truth)?,
        signal_solution: signal(&solution)?,
        coeffs_truth: to_vec(&truth),
        coeffs_solution: to_vec(&solution),
        data: to_vec(problem.data()),
        psi: trace.rows.iter().map(|r| r.psi).collect(),
        outer_iters: trace.outer_iters(),
        inner_iters: trace.total_inner(),
        status: trace.status.to_string(),
    })
}

/// `Ψ` against cumulative inner iterations for every solver at one `(μ, σ)`.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Comparison {
    iters: Vec<Vec<f64>>,
    psi: Vec<Vec<f64>>,
}

#[wasm_bindgen]
impl Comparison {
    /// Names of the compared solvers, in index order.
    pub fn solvers() -> Vec<String> {
        SOLVERS.iter().map(|s| s.to_string()).collect()
    }
    /// Cumulative inner iterations after each outer step of solver `index`.
    pub fn iters(&self, index: usize) -> Vec<f64> {
        self.iters.get(index).cloned().unwrap_or_default()
    }
    pub fn psi(&self, index: usize) -> Vec<f64> {
        self.psi.get(index).cloned().unwrap_or_default()
    }
    pub fn final_psi(&self, index: usize) -> f64 {
        self.psi.get(index).and_then(|p| p.last().copied()).unwrap_or(f64::NAN)
    }
}

pub fn compare(mu: f64, sigma: f64, budget: usize) -> Result<Comparison, String> {
    let (problem, _) = make_deconvolution_problem(&DeconvSpec::default(), 0).map_err(|e| e.to_string())?;
    let mut iters = Vec::new();
    let mut psi = Vec::new();
    for solver in SOLVERS {
        let (_, trace) = solve(&problem, solver, mu, sigma, budget)?;
        let mut total = 0;
        iters.push(
            trace
                .rows
                .iter()
                .map(|r| {
                    total += r.inner_iters;
                    total as f64
                })
                .collect(),
        );
        psi.push(trace.rows.iter().map(|r| r.psi).collect());
    }
    Ok(Comparison { iters, psi })
}

/// A hologram reconstruction on the canvas (`side × side`, row-major).
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Hologram {
    side: usize,
    margin: usize,
    data: Vec<f64>,
    solution: Vec<f64>,
    particles: Vec<u32>,
    localized: usize,
    outer_iters: usize,
    inner_iters: usize,
}

#[wasm_bindgen]
impl Hologram {
    #[wasm_bindgen(getter)]
    pub fn side(&self) -> usize {
        self.side
    }
    /// Zero border around the field of view.
    #[wasm_bindgen(getter)]
    pub fn margin(&self) -> usize {
        self.margin
    }
    /// Recorded intensity pattern, signed.
    #[wasm_bindgen(getter)]
    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn solution(&self) -> Vec<f64> {
        self.solution.clone()
    }
    /// True particle positions as `[x₀, y₀, x₁, y₁, …]` in field-of-view pixels.
    #[wasm_bindgen(getter)]
    pub fn particles(&self) -> Vec<u32> {
        self.particles.clone()
    }
    /// Particles within one pixel of a top-coefficient of the reconstruction.
    #[wasm_bindgen(getter)]
    pub fn localized(&self) -> usize {
        self.localized
    }
    #[wasm_bindgen(getter)]
    pub fn outer_iters(&self) -> usize {
        self.outer_iters
    }
    #[wasm_bindgen(getter)]
    pub fn inner_iters(&self) -> usize {
        self.inner_iters
    }
}

pub fn hologram(image_size: usize, n_particles: usize, seed: u64, budget: usize) -> Result<Hologram, String> {
    let mut spec = HologramSpec {
        image_size,
        ..HologramSpec::default()
    };
    spec.particles = random_particles(n_particles, image_size, 3.0, seed).map_err(|e| e.to_string())?;
    let (problem, _) = make_hologram_problem(&spec, seed).map_err(|e| e.to_string())?;
    let (solution, trace) = solve(&problem, "ppp_gcg", 1e-3, 0.9, budget)?;
    Ok(Hologram {
        side: spec.canvas_size(),
        margin: spec.margin(),
        data: to_vec(problem.data()),
        localized: localized_particles(&spec, &solution, 1.0),
        solution: to_vec(&solution),
        particles: spec.particles.iter().flat_map(|p| [p.x as u32, p.y as u32]).collect(),
        outer_iters: trace.outer_iters(),
        inner_iters: trace.total_inner(),
    })
}

#[wasm_bindgen(js_name = deconvolve)]
pub fn deconvolve_js(
    solver: &str,
    mu: f64,
    sigma: f64,
    budget: usize,
    noise: f64,
    seed: u32,
) -> Result<Deconvolution, JsError> {
    deconvolve(solver, mu, sigma, budget, noise, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = compare)]
pub fn compare_js(mu: f64, sigma: f64, budget: usize) -> Result<Comparison, JsError> {
    compare(mu, sigma, budget).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = hologram)]
pub fn hologram_js(image_size: usize, n_particles: usize, seed: u32, budget: usize) -> Result<Hologram, JsError> {
    hologram(image_size, n_particles, seed.into(), budget).map_err(|e| JsError::new(&e))
}
