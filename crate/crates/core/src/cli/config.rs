//! JSON run configuration.
//!
//! ```json
//! {
//!   "domain": { "dim": 1, "extents": [[0, 1]], "resolution": [128] },
//!   "p": "2",
//!   "phases": [{ "q": "2", "mu": "0" }],
//!   "f": "pi^2 * sin(pi * x)",
//!   "phi": "0",
//!   "solver": { "max_iterations": 1000, "two_start": true },
//!   "verify": { "samples": 500 },
//!   "seed": 7,
//!   "output": { "dir": "out" }
//! }
//! ```
//!
//! `phases` defaults to a single phase with `q = p` and `mu = 0`; `f` and
//! `phi` default to `"0"`. Exponents and weights are sampled at cell centers,
//! `f` and `phi` at nodes.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Expr, Location};
use crate::mesh::{Grid, ScalarField};
use crate::phase::{Phase, PhaseStructure};
use crate::solver::{InitialGuess, Method, SolverOptions};
use crate::sweep::PhaseRanges;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("expression `{field}`: {source}")]
    Parse { field: String, source: expr::ParseError },
    #[error("expression `{field}` uses coordinate {needed}D variables on a {dim}D domain")]
    Dimension { field: String, needed: usize, dim: usize },
    #[error("expression `{field}`: {source}")]
    Eval { field: String, source: expr::EvalError },
    #[error("domain: {0}")]
    Domain(#[from] crate::mesh::MeshError),
    #[error("phase validation failed: {0}")]
    Phase(#[from] crate::phase::PhaseError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub dim: usize,
    pub extents: Vec<[f64; 2]>,
    pub resolution: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub q: String,
    pub mu: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GuessConfig {
    Zero,
    Random,
    Field(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: Option<usize>,
    pub gradient_tolerance: Option<f64>,
    pub energy_tolerance: Option<f64>,
    pub armijo: Option<f64>,
    pub shrink: Option<f64>,
    pub initial_step: Option<f64>,
    pub step_floor: Option<f64>,
    pub method: Option<Method>,
    pub initial_guess: Option<GuessConfig>,
    pub random_amplitude: Option<f64>,
    #[serde(default)]
    pub two_start: bool,
    /// Random probes used to estimate the dual norm of `f` when `dual_bound`
    /// is not given.
    pub dual_probes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UcTarget {
    Gradient,
    ZeroOrder,
    Sobolev,
    ThreePhase,
    /// The configured structure itself.
    Config,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Overrides the per-suite default sample count.
    pub samples: Option<usize>,
    /// Cycled through by `verify-uc`; drawn at random when absent.
    pub epsilons: Option<Vec<f64>>,
    pub targets: Option<Vec<UcTarget>>,
    pub exponent_range: Option<[f64; 2]>,
    pub weight_range: Option<[f64; 2]>,
    pub max_cells: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out_dir() }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn zero_expr() -> String {
    "0".into()
}

/// The document as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub domain: DomainConfig,
    pub p: String,
    pub phases: Option<Vec<PhaseConfig>>,
    #[serde(default = "zero_expr")]
    pub f: String,
    #[serde(default = "zero_expr")]
    pub phi: String,
    pub dual_bound: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A validated configuration with every field sampled.
#[derive(Debug, Clone)]
pub struct Config {
    pub raw: RawConfig,
    pub grid: Arc<Grid>,
    pub phase: Arc<PhaseStructure>,
    pub f: ScalarField,
    pub phi: ScalarField,
}

pub fn parse_config_file(path: &std::path::Path) -> Result<Config, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| ConfigError::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
    build(raw)
}

fn parse_expr(field: &str, src: &str, dim: usize) -> Result<Expr, ConfigError> {
    let e = expr::parse(src).map_err(|source| ConfigError::Parse { field: field.into(), source })?;
    let needed = e.required_dim();
    if needed > dim {
        return Err(ConfigError::Dimension { field: field.into(), needed, dim });
    }
    Ok(e)
}

fn sample(field: &str, src: &str, grid: &Grid, at: Location) -> Result<Vec<f64>, ConfigError> {
    parse_expr(field, src, grid.dim())?
        .sample(grid, at)
        .map_err(|source| ConfigError::Eval { field: field.into(), source })
}

fn build(raw: RawConfig) -> Result<Config, ConfigError> {
    let d = &raw.domain;
    let extents: Vec<(f64, f64)> = d.extents.iter().map(|e| (e[0], e[1])).collect();
    let grid = Grid::new(d.dim, &extents, &d.resolution)?;

    let p = sample("p", &raw.p, &grid, Location::Cells)?;
    let phase_cfg = raw.phases.clone().unwrap_or_else(|| vec![PhaseConfig { q: raw.p.clone(), mu: "0".into() }]);
    if phase_cfg.is_empty() {
        return Err(ConfigError::Invalid("`phases` must list at least one (q, mu) pair".into()));
    }
    let k = phase_cfg.len();
    let mut phases = Vec::with_capacity(k);
    for (j, ph) in phase_cfg.iter().enumerate() {
        let tag = |base: &str| if k == 1 { format!("phases[0].{base}") } else { format!("phases[{j}].{base}") };
        phases.push(Phase {
            q: sample(&tag("q"), &ph.q, &grid, Location::Cells)?,
            mu: sample(&tag("mu"), &ph.mu, &grid, Location::Cells)?,
        });
    }
    let phase = Arc::new(PhaseStructure::new(grid.clone(), p, phases)?);
    let f = ScalarField::new(grid.clone(), sample("f", &raw.f, &grid, Location::Nodes)?)?;
    let phi = ScalarField::new(grid.clone(), sample("phi", &raw.phi, &grid, Location::Nodes)?)?;
    if let Some(a) = raw.dual_bound {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(ConfigError::Invalid(format!("dual_bound must be finite and nonnegative, got {a}")));
        }
    }
    if let Some(GuessConfig::Field(src)) = &raw.solver.initial_guess {
        parse_expr("solver.initial_guess.field", src, grid.dim())?;
    }
    let cfg = Config { raw, grid, phase, f, phi };
    cfg.solver_options()?.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.phase_ranges()?;
    Ok(cfg)
}

impl Config {
    pub fn solver_options(&self) -> Result<SolverOptions, ConfigError> {
        let s = &self.raw.solver;
        let d = SolverOptions::default();
        let initial_guess = match &s.initial_guess {
            None | Some(GuessConfig::Zero) => InitialGuess::Zero,
            Some(GuessConfig::Random) => InitialGuess::Random { amplitude: s.random_amplitude.unwrap_or(0.1) },
            Some(GuessConfig::Field(src)) => {
                let mut values = sample("solver.initial_guess.field", src, &self.grid, Location::Nodes)?;
                let mask = self.grid.boundary_mask();
                for (n, v) in values.iter_mut().enumerate() {
                    if mask.is_boundary(n) {
                        *v = 0.0;
                    }
                }
                InitialGuess::Field(ScalarField::new(self.grid.clone(), values)?)
            }
        };
        Ok(SolverOptions {
            max_iterations: s.max_iterations.unwrap_or(d.max_iterations),
            gradient_tolerance: s.gradient_tolerance.or(d.gradient_tolerance),
            energy_tolerance: s.energy_tolerance.unwrap_or(d.energy_tolerance),
            armijo: s.armijo.unwrap_or(d.armijo),
            shrink: s.shrink.unwrap_or(d.shrink),
            initial_step: s.initial_step.unwrap_or(d.initial_step),
            step_floor: s.step_floor.unwrap_or(d.step_floor),
            method: s.method.unwrap_or(d.method),
            initial_guess,
            seed: self.raw.seed,
            two_start: s.two_start,
        })
    }

    pub fn phase_ranges(&self) -> Result<PhaseRanges, ConfigError> {
        let v = &self.raw.verify;
        let d = PhaseRanges::default();
        let exponent = v.exponent_range.map_or(d.exponent, |r| (r[0], r[1]));
        let weight = v.weight_range.map_or(d.weight, |r| (r[0], r[1]));
        if !(exponent.0 > 1.0 && exponent.0 <= exponent.1 && exponent.1.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "verify.exponent_range must satisfy 1 < lo ≤ hi < ∞, got [{}, {}]",
                exponent.0, exponent.1
            )));
        }
        if !(weight.0 >= 0.0 && weight.0 <= weight.1 && weight.1.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "verify.weight_range must satisfy 0 ≤ lo ≤ hi < ∞, got [{}, {}]",
                weight.0, weight.1
            )));
        }
        let max_cells = v.max_cells.unwrap_or(d.max_cells);
        if max_cells < 2 {
            return Err(ConfigError::Invalid("verify.max_cells must be at least 2".into()));
        }
        Ok(PhaseRanges { exponent, weight, max_cells })
    }
}
