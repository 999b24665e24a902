//! Problem construction, single runs and parameter sweeps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use l1ppp::io::{read_matrix_csv, read_vector_csv, write_pgm, write_vector_csv};
use l1ppp::problems::{
    localized_particles, make_deconvolution_problem, make_hologram_problem, make_random_fbi_problem, random_particles,
    HologramSpec,
};
use l1ppp::trace::format_sig15;
use l1ppp::{
    ista_run, run_ppp, InnerMethod, IstaParams, LinearOperator, PppParams, Problem, RunStatus, SolverTrace, Vector,
};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::{Config, ConfigError, MatrixSource, ProblemConfig, SolverKind, VectorSource};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("solver error: {0}")]
    Solver(#[from] l1ppp::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A built problem together with what is known about its origin.
pub struct Instance {
    pub problem: Problem,
    pub truth: Option<Vector>,
    /// Set for holograms, whose coefficients form a square canvas image.
    pub hologram: Option<HologramSpec>,
}

/// Builds the configured problem; generator and file errors point into `[problem]`.
pub fn build_instance(config: &Config) -> Result<Instance, ConfigError> {
    let at = |key: &str, e: l1ppp::Error| {
        let key = match &e {
            l1ppp::Error::InvalidParameter { name, .. } => name.to_string(),
            _ => key.to_string(),
        };
        config.error_at("problem", &key, e.to_string())
    };
    let seed = config.seed;
    match &config.problem {
        ProblemConfig::Deconvolution(d) => {
            let (problem, truth) = make_deconvolution_problem(&d.spec(), seed).map_err(|e| at("", e))?;
            Ok(Instance {
                problem,
                truth: Some(truth),
                hologram: None,
            })
        }
        ProblemConfig::Hologram(h) => {
            let mut spec = h.base_spec();
            spec.particles = match h.explicit_particles() {
                Some(particles) => particles,
                None => random_particles(h.n_particles, spec.image_size, h.min_separation, seed)
                    .map_err(|e| at("n_particles", e))?,
            };
            let (problem, truth) = make_hologram_problem(&spec, seed).map_err(|e| at("", e))?;
            Ok(Instance {
                problem,
                truth: Some(truth),
                hologram: Some(spec),
            })
        }
        ProblemConfig::RandomFbi(f) => {
            let (problem, truth) =
                make_random_fbi_problem(f.m, f.n, f.sparsity, f.alpha, seed).map_err(|e| at("", e))?;
            Ok(Instance {
                problem,
                truth: Some(truth),
                hologram: None,
            })
        }
        ProblemConfig::Dense(d) => {
            let matrix = load_matrix(config, &d.matrix).map_err(|e| at("matrix", e))?;
            let data = load_vector(config, &d.data).map_err(|e| at("data", e))?;
            let op = LinearOperator::dense(matrix).map_err(|e| at("matrix", e))?;
            let problem = Problem::new(op, data, d.alpha).map_err(|e| at("data", e))?;
            Ok(Instance {
                problem,
                truth: None,
                hologram: None,
            })
        }
        ProblemConfig::Convolution1d(c) => {
            let kernel = load_vector(config, &c.kernel).map_err(|e| at("kernel", e))?;
            let data = load_vector(config, &c.data).map_err(|e| at("data", e))?;
            let op = LinearOperator::circular_conv_1d(kernel.as_slice().to_vec()).map_err(|e| at("kernel", e))?;
            let problem = Problem::new(op, data, c.alpha).map_err(|e| at("data", e))?;
            Ok(Instance {
                problem,
                truth: None,
                hologram: None,
            })
        }
    }
}

fn load_vector(config: &Config, source: &VectorSource) -> l1ppp::Result<Vector> {
    match source {
        VectorSource::Inline(values) => Ok(Vector::from_column_slice(values)),
        VectorSource::File(path) => read_vector_csv(&config.base_dir.join(path)),
    }
}

fn load_matrix(config: &Config, source: &MatrixSource) -> l1ppp::Result<DMatrix<f64>> {
    match source {
        MatrixSource::Inline(rows) => {
            let ncols = rows.first().map_or(0, Vec::len);
            if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
                return Err(l1ppp::Error::InvalidParameter {
                    name: "matrix",
                    reason: "rows must be non-empty and of equal length".into(),
                });
            }
            Ok(DMatrix::from_row_iterator(
                rows.len(),
                ncols,
                rows.iter().flatten().copied(),
            ))
        }
        MatrixSource::File(path) => read_matrix_csv(&config.base_dir.join(path)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolverParams {
    Ppp(PppParams),
    Ista(IstaParams),
}

pub struct Outcome {
    pub solution: Vector,
    pub trace: SolverTrace,
}

impl Outcome {
    /// `Ψ` at the returned solution as recorded by the last trace row.
    pub fn final_psi(&self, problem: &Problem) -> l1ppp::Result<f64> {
        match self.trace.rows.last() {
            Some(row) => Ok(row.psi),
            None => problem.objective(&self.solution),
        }
    }
}

fn method_of(solver: SolverKind) -> InnerMethod {
    match solver {
        SolverKind::PppGcg => InnerMethod::Gcg,
        _ => InnerMethod::DampedIsta,
    }
}

/// Runs one solver from `u = 0`.
pub fn solve(problem: &Problem, params: &SolverParams) -> l1ppp::Result<Outcome> {
    let u0 = Vector::zeros(problem.dim());
    match params {
        SolverParams::Ppp(p) => {
            let out = run_ppp(problem, &u0, p)?;
            Ok(Outcome {
                solution: out.solution,
                trace: out.trace,
            })
        }
        SolverParams::Ista(p) => {
            let out = ista_run(problem, &u0, p)?;
            Ok(Outcome {
                solution: out.solution,
                trace: out.trace,
            })
        }
    }
}

/// Solver and parameters of a `run`.
pub fn run_params(config: &Config) -> Result<(SolverKind, SolverParams), ConfigError> {
    let solver = config
        .solver
        .ok_or_else(|| config.error_at("", "solver", "`solver` is required for `run`"))?;
    let params = if solver.is_ppp() {
        let ppp = config.ppp_block(solver, "", "solver")?;
        SolverParams::Ppp(ppp.params(method_of(solver), ppp.mu, ppp.sigma))
    } else {
        SolverParams::Ista(config.ista_block("", "solver")?.params())
    };
    Ok((solver, params))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub solver: SolverKind,
    pub final_psi: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub status: RunStatus,
    /// `(localized, total)` particles for hologram problems.
    pub localized: Option<(usize, usize)>,
}

impl RunReport {
    pub fn print(&self) {
        println!("solver: {}", self.solver);
        println!("final psi: {}", format_sig15(self.final_psi));
        println!("outer iterations: {}", self.outer_iters);
        println!("inner iterations: {}", self.inner_iters);
        if let Some((found, total)) = self.localized {
            println!("localized particles: {found}/{total}");
        }
        println!("status: {}", self.status);
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))
}

fn write_trace(path: &Path, trace: &SolverTrace) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut out = BufWriter::new(file);
    trace.write_csv(&mut out).map_err(io_error(path))?;
    out.flush().map_err(io_error(path))
}

/// Executes one solve and writes `trace.csv`, `solution.csv`, `truth.csv`
/// when known, and `data.pgm`/`solution.pgm` for holograms into `out_dir`.
pub fn run(config: &Config, out_dir: &Path) -> Result<RunReport, CliError> {
    let instance = build_instance(config)?;
    let (solver, params) = run_params(config)?;
    let outcome = solve(&instance.problem, &params)?;
    create_dir(out_dir)?;
    write_trace(&out_dir.join("trace.csv"), &outcome.trace)?;
    write_vector_csv(&out_dir.join("solution.csv"), &outcome.solution)?;
    if let Some(truth) = &instance.truth {
        write_vector_csv(&out_dir.join("truth.csv"), truth)?;
    }
    let mut localized = None;
    if let Some(spec) = &instance.hologram {
        let side = spec.canvas_size();
        write_pgm(
            &out_dir.join("data.pgm"),
            instance.problem.data().as_slice(),
            side,
            side,
        )?;
        write_pgm(&out_dir.join("solution.pgm"), outcome.solution.as_slice(), side, side)?;
        localized = Some((localized_particles(spec, &outcome.solution, 1.0), spec.particles.len()));
    }
    Ok(RunReport {
        solver,
        final_psi: outcome.final_psi(&instance.problem)?,
        outer_iters: outcome.trace.outer_iters(),
        inner_iters: outcome.trace.total_inner(),
        status: outcome.trace.status.clone(),
        localized,
    })
}

/// One point of a sweep; `mu` and `sigma` are `None` for plain ISTA.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub solver: SolverKind,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
}

impl Cell {
    pub fn trace_file(&self) -> String {
        match (self.mu, self.sigma) {
            (Some(mu), Some(sigma)) => format!("trace_{}_mu{mu}_sigma{sigma}.csv", self.solver),
            _ => format!("trace_{}.csv", self.solver),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellReport {
    pub cell: Cell,
    pub final_psi: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub status: RunStatus,
}

pub const SUMMARY_HEADER: &str = "solver,mu,sigma,final_psi,outer_iters,inner_iters,status";

/// Cells of the sweep with their solver parameters, in output order.
pub fn sweep_cells(config: &Config) -> Result<Vec<(Cell, SolverParams)>, ConfigError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| config.error_at("", "", "`sweep` needs a [sweep] section"))?;
    let mut cells = Vec::new();
    for &solver in &sweep.solvers {
        if solver.is_ppp() {
            let ppp = config.ppp_block(solver, "sweep", "solvers")?;
            for &mu in &sweep.mu {
                for &sigma in &sweep.sigma {
                    let mut params = ppp.params(method_of(solver), mu, sigma);
                    params.total_iter_budget = Some(sweep.total_iter_budget);
                    let cell = Cell {
                        solver,
                        mu: Some(mu),
                        sigma: Some(sigma),
                    };
                    cells.push((cell, SolverParams::Ppp(params)));
                }
            }
        } else {
            let mut params = config.ista_block("sweep", "solvers")?.params();
            params.max_iters = sweep.total_iter_budget;
            cells.push((
                Cell {
                    solver,
                    mu: None,
                    sigma: None,
                },
                SolverParams::Ista(params),
            ));
        }
    }
    Ok(cells)
}

/// Runs every cell (concurrently), writing one trace per cell and a
/// `summary.csv` in cell order.
pub fn sweep(config: &Config, out_dir: &Path) -> Result<Vec<CellReport>, CliError> {
    let instance = build_instance(config)?;
    let cells = sweep_cells(config)?;
    create_dir(out_dir)?;
    let problem = &instance.problem;
    let reports = cells
        .par_iter()
        .map(|(cell, params)| {
            log::info!("sweep cell {cell:?}");
            let outcome = solve(problem, params)?;
            write_trace(&out_dir.join(cell.trace_file()), &outcome.trace)?;
            Ok(CellReport {
                cell: *cell,
                final_psi: outcome.final_psi(problem)?,
                outer_iters: outcome.trace.outer_iters(),
                inner_iters: outcome.trace.total_inner(),
                status: outcome.trace.status,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let path = out_dir.join("summary.csv");
    let file = File::create(&path).map_err(io_error(&path))?;
    let mut out = BufWriter::new(file);
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    writeln!(out, "{SUMMARY_HEADER}").map_err(io_error(&path))?;
    for r in &reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.cell.solver,
            opt(r.cell.mu),
            opt(r.cell.sigma),
            format_sig15(r.final_psi),
            r.outer_iters,
            r.inner_iters,
            status_word(&r.status)
        )
        .map_err(io_error(&path))?;
    }
    out.flush().map_err(io_error(&path))?;
    Ok(reports)
}

/// Status without the free-text abort reason, safe inside a CSV field.
pub fn status_word(status: &RunStatus) -> &'static str {
    match status {
        RunStatus::Converged => "converged",
        RunStatus::MaxOuter => "max_outer",
        RunStatus::BudgetExhausted => "budget_exhausted",
        RunStatus::Aborted(_) => "aborted",
    }
}
