//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//! solver = "ppp_ista"
//!
//! [problem]
//! kind = "deconvolution"
//! alpha = 1e-4
//!
//! [ppp]
//! mu = 0.2
//! sigma = 0.1
//! total_iter_budget = 350
//!
//! [sweep]
//! mu = [0.2, 0.01]
//! sigma = [0.1, 0.9]
//! solvers = ["ppp_ista", "ppp_gcg", "ista"]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use l1ppp::problems::{DeconvSpec, HologramSpec, Particle};
use l1ppp::{InnerMethod, InnerParams, IstaParams, MuSchedule, PppParams};
use serde::Deserialize;

/// A configuration problem, anchored to a line of the source when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{line}: {}", self.path.display(), self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    PppIsta,
    PppGcg,
    Ista,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::PppIsta => "ppp_ista",
            SolverKind::PppGcg => "ppp_gcg",
            SolverKind::Ista => "ista",
        }
    }

    pub fn is_ppp(self) -> bool {
        self != SolverKind::Ista
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Numbers given inline or read from a CSV file (relative to the config).
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum VectorSource {
    Inline(Vec<f64>),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Inline(Vec<Vec<f64>>),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    Deconvolution(DeconvConfig),
    Hologram(HologramConfig),
    RandomFbi(RandomFbiConfig),
    Dense(DenseConfig),
    #[serde(rename = "convolution_1d")]
    Convolution1d(Convolution1dConfig),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconvConfig {
    pub grid_size: Option<usize>,
    pub n_coeffs: Option<usize>,
    pub kernel_width: Option<f64>,
    /// `[[index, amplitude], ...]`.
    pub spikes: Option<Vec<(usize, f64)>>,
    pub noise_sigma: Option<f64>,
    pub alpha: Option<f64>,
}

impl DeconvConfig {
    pub fn spec(&self) -> DeconvSpec {
        let d = DeconvSpec::default();
        DeconvSpec {
            grid_size: self.grid_size.unwrap_or(d.grid_size),
            n_coeffs: self.n_coeffs.unwrap_or(d.n_coeffs),
            kernel_width: self.kernel_width.unwrap_or(d.kernel_width),
            spikes: self.spikes.clone().unwrap_or(d.spikes),
            noise_sigma: self.noise_sigma.unwrap_or(d.noise_sigma),
            alpha: self.alpha.unwrap_or(d.alpha),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HologramConfig {
    pub image_size: Option<usize>,
    pub pixel_pitch: Option<f64>,
    pub wavelength: Option<f64>,
    pub distance: Option<f64>,
    pub alpha: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub margin: Option<usize>,
    /// Explicit `[[x, y, amplitude], ...]`; otherwise `n_particles` random
    /// unit particles are drawn from the seed.
    pub particles: Option<Vec<(usize, usize, f64)>>,
    #[serde(default = "default_particle_count")]
    pub n_particles: usize,
    #[serde(default = "default_separation")]
    pub min_separation: f64,
}

fn default_particle_count() -> usize {
    20
}

fn default_separation() -> f64 {
    3.0
}

impl HologramConfig {
    /// The `HologramSpec` described by this block, without particles.
    pub fn base_spec(&self) -> HologramSpec {
        let d = HologramSpec::default();
        HologramSpec {
            image_size: self.image_size.unwrap_or(d.image_size),
            pixel_pitch: self.pixel_pitch.unwrap_or(d.pixel_pitch),
            wavelength: self.wavelength.unwrap_or(d.wavelength),
            distance: self.distance.unwrap_or(d.distance),
            particles: Vec::new(),
            alpha: self.alpha.unwrap_or(d.alpha),
            noise_sigma: self.noise_sigma.unwrap_or(d.noise_sigma),
            margin: self.margin.or(d.margin),
        }
    }

    pub fn explicit_particles(&self) -> Option<Vec<Particle>> {
        self.particles.as_ref().map(|ps| {
            ps.iter()
                .map(|&(x, y, amplitude)| Particle { x, y, amplitude })
                .collect()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomFbiConfig {
    pub m: usize,
    pub n: usize,
    pub sparsity: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseConfig {
    pub matrix: MatrixSource,
    pub data: VectorSource,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convolution1dConfig {
    pub kernel: VectorSource,
    pub data: VectorSource,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PppConfig {
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_max_inner")]
    pub max_inner_iters: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer_iters: usize,
    pub total_iter_budget: Option<usize>,
    pub v_tol: Option<f64>,
    #[serde(default = "default_y_tol")]
    pub y_tol: f64,
    /// Turns the constant `mu` into `max(mu_floor, mu · mu_decayⁿ)`.
    pub mu_decay: Option<f64>,
    pub mu_floor: Option<f64>,
}

fn default_mu() -> f64 {
    0.05
}
fn default_sigma() -> f64 {
    0.9
}
fn default_step() -> f64 {
    1.0
}
fn default_max_inner() -> usize {
    10_000
}
fn default_max_outer() -> usize {
    10_000
}
fn default_y_tol() -> f64 {
    1e-12
}

impl PppConfig {
    /// Solver parameters at the given `(μ, σ)` and inner method.
    pub fn params(&self, method: InnerMethod, mu: f64, sigma: f64) -> PppParams {
        let mut params = PppParams::new(InnerParams {
            method,
            sigma,
            mu,
            step_size: self.step_size,
            max_inner_iters: self.max_inner_iters,
        });
        if let Some(factor) = self.mu_decay {
            params.mu_schedule = MuSchedule::Decreasing {
                initial: mu,
                factor,
                floor: self.mu_floor.unwrap_or(mu * 1e-3),
            };
        }
        params.max_outer_iters = self.max_outer_iters;
        params.total_iter_budget = self.total_iter_budget;
        params.v_tol = self.v_tol;
        params.y_tol = self.y_tol;
        params
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IstaConfig {
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default = "default_max_outer")]
    pub max_iters: usize,
    #[serde(default)]
    pub tol: f64,
}

impl IstaConfig {
    pub fn params(&self) -> IstaParams {
        IstaParams {
            step_size: self.step_size,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    /// Inner-iteration budget of every PPP cell and iteration cap of ISTA cells.
    #[serde(default = "default_sweep_budget")]
    pub total_iter_budget: usize,
}

fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::PppIsta]
}

fn default_sweep_budget() -> usize {
    350
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    output_dir: Option<PathBuf>,
    solver: Option<SolverKind>,
    problem: toml::Value,
    ppp: Option<PppConfig>,
    ista: Option<IstaConfig>,
    sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub solver: Option<SolverKind>,
    pub problem: ProblemConfig,
    pub ppp: Option<PppConfig>,
    pub ista: Option<IstaConfig>,
    pub sweep: Option<SweepConfig>,
    /// Directory that relative data paths are resolved against.
    pub base_dir: PathBuf,
    path: PathBuf,
    source: String,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            message: e.to_string(),
        })?;
        Self::parse(&source, path)
    }

    /// Parses and validates `source`; `path` is used for messages and to
    /// resolve relative data files.
    pub fn parse(source: &str, path: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(source).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of(source, s.start)),
            message: e.message().to_string(),
        })?;
        let mut config = Config {
            seed: raw.seed,
            output_dir: raw.output_dir,
            solver: raw.solver,
            problem: ProblemConfig::Convolution1d(Convolution1dConfig {
                kernel: VectorSource::Inline(vec![]),
                data: VectorSource::Inline(vec![]),
                alpha: 0.0,
            }),
            ppp: raw.ppp,
            ista: raw.ista,
            sweep: raw.sweep,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            path: path.to_path_buf(),
            source: source.to_string(),
        };
        // the problem table is decoded separately so that its errors point
        // into `[problem]` rather than at the document root
        config.problem = ProblemConfig::deserialize(raw.problem).map_err(|e| {
            let message = e.message().to_string();
            let key = if message.contains("unknown variant") {
                "kind"
            } else {
                field_in_message(&message).first().copied().unwrap_or("")
            }
            .to_string();
            config.error_at("problem", &key, message)
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Error anchored at `key` inside `[section]` (top level for `""`), or at
    /// the section header when the key is absent.
    pub fn error_at(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.clone(),
            line: locate(&self.source, section, key),
            message: message.into(),
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(ppp) = &self.ppp {
            check(
                self,
                "ppp",
                "mu",
                ppp.mu > 0.0 && ppp.mu.is_finite(),
                "must be positive",
            )?;
            check(
                self,
                "ppp",
                "sigma",
                (0.0..1.0).contains(&ppp.sigma),
                "must lie in [0, 1)",
            )?;
            check(
                self,
                "ppp",
                "step_size",
                ppp.step_size > 0.0 && ppp.step_size < 2.0,
                "must lie in (0, 2)",
            )?;
            check(
                self,
                "ppp",
                "max_inner_iters",
                ppp.max_inner_iters > 0,
                "must be at least 1",
            )?;
            if let Some(decay) = ppp.mu_decay {
                check(
                    self,
                    "ppp",
                    "mu_decay",
                    decay > 0.0 && decay <= 1.0,
                    "must lie in (0, 1]",
                )?;
            }
            if let Some(floor) = ppp.mu_floor {
                check(
                    self,
                    "ppp",
                    "mu_floor",
                    floor > 0.0 && floor <= ppp.mu,
                    "must lie in (0, mu]",
                )?;
            }
        }
        if let Some(ista) = &self.ista {
            check(
                self,
                "ista",
                "step_size",
                ista.step_size > 0.0 && ista.step_size < 2.0,
                "must lie in (0, 2)",
            )?;
            check(self, "ista", "tol", ista.tol >= 0.0, "must be non-negative")?;
        }
        if let Some(sweep) = &self.sweep {
            check(
                self,
                "sweep",
                "solvers",
                !sweep.solvers.is_empty(),
                "must name at least one solver",
            )?;
            let ppp_cells = sweep.solvers.iter().any(|s| s.is_ppp());
            if ppp_cells {
                check(self, "sweep", "mu", !sweep.mu.is_empty(), "must not be empty")?;
                check(self, "sweep", "sigma", !sweep.sigma.is_empty(), "must not be empty")?;
            }
            check(
                self,
                "sweep",
                "mu",
                sweep.mu.iter().all(|&m| m > 0.0 && m.is_finite()),
                "entries must be positive",
            )?;
            check(
                self,
                "sweep",
                "sigma",
                sweep.sigma.iter().all(|s| (0.0..1.0).contains(s)),
                "entries must lie in [0, 1)",
            )?;
            check(
                self,
                "sweep",
                "total_iter_budget",
                sweep.total_iter_budget > 0,
                "must be at least 1",
            )?;
        }
        Ok(())
    }

    /// The `[ppp]` block, required when a PPP solver is selected.
    pub fn ppp_block(&self, solver: SolverKind, section: &str, key: &str) -> Result<&PppConfig, ConfigError> {
        self.ppp
            .as_ref()
            .ok_or_else(|| self.error_at(section, key, format!("solver `{solver}` needs a [ppp] section")))
    }

    /// The `[ista]` block, required when plain ISTA is selected.
    pub fn ista_block(&self, section: &str, key: &str) -> Result<&IstaConfig, ConfigError> {
        self.ista
            .as_ref()
            .ok_or_else(|| self.error_at(section, key, "solver `ista` needs an [ista] section"))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn check(config: &Config, section: &str, key: &str, ok: bool, message: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(config.error_at(section, key, format!("`{key}` {message}")))
    }
}

/// Field names quoted in a serde message such as "missing field `alpha`".
fn field_in_message(message: &str) -> Vec<&str> {
    message.split('`').skip(1).step_by(2).collect()
}

/// 1-based line of a byte offset.
fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Line defining `key` in `[section]`, else the section header, else `None`.
fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        let lhs = lhs.trim();
        let dotted = format!("{section}.{key}");
        if !key.is_empty() && ((current == section && lhs == key) || (current.is_empty() && lhs == dotted)) {
            return Some(i + 1);
        }
    }
    header
}
