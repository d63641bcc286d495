//! The `dphase` command line.
//!
//! Every subcommand reads a JSON config (see [`config`]), writes
//! `report.json` into the output directory and returns an exit code:
//! 0 success, 1 usage or config error, 2 non-convergence or failed checks,
//! 3 I/O error.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::convexity;
use crate::expr::{self, Location};
use crate::mesh::ScalarField;
use crate::modular::{self, Integrand, ModularKind};
use crate::solver::{self, Problem, Solution};
use crate::sweep::{self, Tally, UcFamily};

pub use config::{parse_config, parse_config_file, Config, ConfigError, UcTarget};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILED: i32 = 2;
pub const EXIT_IO: i32 = 3;

const DUAL_PROBES: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "dphase", version, about = "Double-phase variable-exponent Poisson solver and diagnostics")]
pub struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize the energy and write solution.csv and report.json.
    Solve { config: PathBuf },
    /// Modulars, Luxemburg norms and sandwich bounds of a field.
    Norm {
        config: PathBuf,
        /// Expression in x (and y) sampled at the nodes.
        #[arg(long)]
        field: String,
        /// Restrict norms to one modular (zero_order, gradient, sobolev).
        #[arg(long)]
        kind: Option<ModularKind>,
    },
    /// Uniform-convexity sweeps.
    VerifyUc { config: PathBuf },
    /// Monotonicity lower-bound sweep.
    CheckMonotone { config: PathBuf },
    /// Two-point, parallelogram, scalar and component-estimate sweeps.
    CheckInequalities { config: PathBuf },
    /// Norm/modular sandwich and integrand-equivalence sweeps.
    CheckSandwich { config: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Norm { .. } => "norm",
            Command::VerifyUc { .. } => "verify-uc",
            Command::CheckMonotone { .. } => "check-monotone",
            Command::CheckInequalities { .. } => "check-inequalities",
            Command::CheckSandwich { .. } => "check-sandwich",
        }
    }

    fn config_path(&self) -> &Path {
        match self {
            Command::Solve { config }
            | Command::Norm { config, .. }
            | Command::VerifyUc { config }
            | Command::CheckMonotone { config }
            | Command::CheckInequalities { config }
            | Command::CheckSandwich { config } => config,
        }
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Numerical(_) => EXIT_FAILED,
            RunError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            RunError::Config(m) | RunError::Numerical(m) | RunError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

fn numerical(e: impl std::fmt::Display) -> RunError {
    RunError::Numerical(e.to_string())
}

/// Result of a subcommand before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub results: Value,
    /// Whether the run counts as a success (exit 0) or not (exit 2).
    pub ok: bool,
    /// Text printed to stdout.
    pub summary: String,
    pub csv: Option<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn run_cli(cli: &Cli) -> Result<i32, RunError> {
    let start = Instant::now();
    let mut cfg = parse_config_file(cli.command.config_path())?;
    let echo = config_echo(&cfg);
    if let Some(seed) = cli.seed {
        cfg.raw.seed = seed;
    }
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| cfg.raw.output.dir.clone());
    let outcome = execute(&cli.command, &cfg)?;
    let report = json!({
        "command": cli.command.name(),
        "config": echo,
        "seed": cfg.raw.seed,
        "versions": versions(),
        "results": outcome.results,
        "timing": { "elapsed_seconds": start.elapsed().as_secs_f64() },
    });
    write_outputs(&out_dir, &report, outcome.csv.as_deref())?;
    print!("{}", outcome.summary);
    Ok(if outcome.ok { EXIT_OK } else { EXIT_FAILED })
}

fn versions() -> Value {
    json!({ "double_phase": env!("CARGO_PKG_VERSION"), "report_format": 1 })
}

/// The config as written, minus the output location.
fn config_echo(cfg: &Config) -> Value {
    let mut v = serde_json::to_value(&cfg.raw).expect("config serializes");
    if let Value::Object(map) = &mut v {
        map.remove("output");
    }
    v
}

fn write_outputs(dir: &Path, report: &Value, csv: Option<&str>) -> Result<(), RunError> {
    let io =
        |what: &str, path: &Path, e: std::io::Error| RunError::Io(format!("cannot {what} {}: {e}", path.display()));
    std::fs::create_dir_all(dir).map_err(|e| io("create", dir, e))?;
    if let Some(csv) = csv {
        let path = dir.join("solution.csv");
        std::fs::write(&path, csv).map_err(|e| io("write", &path, e))?;
    }
    let path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| io("write", &path, e))
}

/// Runs a command on an already parsed config without touching the disk.
pub fn execute(command: &Command, cfg: &Config) -> Result<Outcome, RunError> {
    match command {
        Command::Solve { .. } => cmd_solve(cfg),
        Command::Norm { field, kind, .. } => cmd_norm(cfg, field, *kind),
        Command::VerifyUc { .. } => cmd_verify_uc(cfg),
        Command::CheckMonotone { .. } => cmd_check_monotone(cfg),
        Command::CheckInequalities { .. } => cmd_check_inequalities(cfg),
        Command::CheckSandwich { .. } => cmd_check_sandwich(cfg),
    }
}

fn to_value(x: &impl serde::Serialize) -> Value {
    serde_json::to_value(x).expect("serializable")
}

pub fn solution_csv(sol: &Solution) -> String {
    let grid = sol.u_star.grid();
    let mut out = String::from(if grid.dim() == 1 { "x,u,w\n" } else { "x,y,u,w\n" });
    for n in 0..grid.node_count() {
        let p = grid.node_point(n);
        let (u, w) = (sol.u_star.values()[n], sol.w_star.values()[n]);
        if grid.dim() == 1 {
            let _ = writeln!(out, "{},{},{}", p[0], u, w);
        } else {
            let _ = writeln!(out, "{},{},{},{}", p[0], p[1], u, w);
        }
    }
    out
}

fn cmd_solve(cfg: &Config) -> Result<Outcome, RunError> {
    let opts = cfg.solver_options()?;
    let prob =
        Problem::new(cfg.phase.clone(), cfg.phi.clone(), cfg.f.clone(), cfg.raw.dual_bound).map_err(numerical)?;
    let sol = solver::solve_weak(&prob, &opts).map_err(numerical)?;
    let (dual_bound, source) = match cfg.raw.dual_bound {
        Some(a) => (a, "config"),
        None => {
            let probes = cfg.raw.solver.dual_probes.unwrap_or(DUAL_PROBES);
            let a = modular::estimate_dual_bound(
                &cfg.f,
                &cfg.phase,
                probes,
                cfg.raw.seed,
                std::slice::from_ref(&sol.u_star),
            )
            .map_err(numerical)?;
            (a, "estimate")
        }
    };
    let lower_bound = match sol.lower_bound {
        Some(lb) => lb,
        None => solver::energy_lower_bound(&prob, dual_bound).map_err(numerical)?,
    };
    let history = &sol.energy_history;
    let decreasing = history.windows(2).all(|w| w[1] < w[0]);
    let summary = cfg.phase.summary();
    let results = json!({
        "converged": sol.converged(),
        "termination": to_value(&sol.termination),
        "iterations": sol.iterations,
        "energy_history": history,
        "energy_strictly_decreasing": decreasing,
        "final_energy": history.last(),
        "gradient_norm": sol.gradient_norm,
        "gradient_tolerance": sol.gradient_tolerance,
        "weak_residual": sol.weak_residual,
        "dual_bound": { "value": dual_bound, "source": source },
        "lower_bound": lower_bound,
        "lower_bound_holds": history.iter().all(|&e| e >= lower_bound),
        "exponents": { "m": summary.m, "big_m": summary.big_m, "phases": cfg.phase.phase_count() },
        "nodes": cfg.grid.node_count(),
        "two_start": sol.two_start.as_ref().map(to_value),
    });
    let mut text = format!(
        "solve: {:?} after {} iterations, energy {}, weak residual {:e}\n",
        sol.termination,
        sol.iterations,
        history.last().copied().unwrap_or(f64::NAN),
        sol.weak_residual
    );
    if let Some(ts) = &sol.two_start {
        let _ = writeln!(text, "two-start modular distance {:e}", ts.modular_distance);
    }
    Ok(Outcome { results, ok: sol.converged(), summary: text, csv: Some(solution_csv(&sol)) })
}

fn cmd_norm(cfg: &Config, field: &str, kind: Option<ModularKind>) -> Result<Outcome, RunError> {
    let e = expr::parse(field).map_err(|e| RunError::Config(format!("--field: {e}")))?;
    if e.required_dim() > cfg.grid.dim() {
        return Err(RunError::Config(format!(
            "--field uses coordinate {}D variables on a {}D domain",
            e.required_dim(),
            cfg.grid.dim()
        )));
    }
    let values = e.sample(&cfg.grid, Location::Nodes).map_err(|e| RunError::Config(format!("--field: {e}")))?;
    let u = ScalarField::new(cfg.grid.clone(), values).map_err(numerical)?;
    let mut modulars = serde_json::Map::new();
    let mut norms = serde_json::Map::new();
    for k in ModularKind::ALL {
        modulars.insert(k.name().into(), json!(modular::modular(&u, &cfg.phase, k).map_err(numerical)?));
        if kind.is_some_and(|sel| sel != k) {
            continue;
        }
        let sandwich = modular::norm_modular_sandwich(&u, &cfg.phase, k).map_err(numerical)?;
        let equivalence = modular::overline_equivalence_check(&u, &cfg.phase, k).map_err(numerical)?;
        let bar = modular::rho_with(&u, &cfg.phase, k, Integrand::Bar, None).map_err(numerical)?.value;
        norms.insert(
            k.name().into(),
            json!({
                "norm": sandwich.norm,
                "modular_bar": bar,
                "sandwich": to_value(&sandwich),
                "equivalence": to_value(&equivalence),
            }),
        );
    }
    let ok = norms.values().all(|n| n["sandwich"]["holds"] == true && n["equivalence"]["holds"] == true);
    let results = json!({ "field": field, "modular": modulars, "norms": norms, "holds": ok });
    let summary = format!("{}\n", serde_json::to_string_pretty(&results).expect("serializes"));
    Ok(Outcome { results, ok, summary, csv: None })
}

fn samples_or(cfg: &Config, default: usize) -> usize {
    cfg.raw.verify.samples.unwrap_or(default)
}

fn tally_line(name: &str, t: &Tally) -> String {
    format!("{name}: {} samples, {} pass, {} vacuous, {} fail\n", t.samples, t.pass, t.vacuous, t.fail)
}

fn cmd_verify_uc(cfg: &Config) -> Result<Outcome, RunError> {
    let ranges = cfg.phase_ranges()?;
    let targets = cfg.raw.verify.targets.clone().unwrap_or_else(|| {
        vec![UcTarget::Gradient, UcTarget::ZeroOrder, UcTarget::Sobolev, UcTarget::ThreePhase, UcTarget::Config]
    });
    let epsilons = cfg.raw.verify.epsilons.as_deref();
    if let Some(list) = epsilons {
        // the bound shrinks as m grows, so check the worst case
        let worst_random_m = ranges.exponent.1;
        for &t in &targets {
            let m = if t == UcTarget::Config { cfg.phase.summary().m } else { worst_random_m };
            for &eps in list {
                convexity::delta_of_epsilon(eps, m).map_err(|e| RunError::Config(format!("verify.epsilons: {e}")))?;
            }
        }
    }
    let seed = cfg.raw.seed;
    let mut tallies = serde_json::Map::new();
    let mut summary = String::new();
    let mut ok = true;
    for t in targets {
        let (name, tally) = match t {
            UcTarget::Config => ("config", sweep::uc_sweep_fixed(&cfg.phase, samples_or(cfg, 200), seed, epsilons)),
            _ => {
                let (name, family, default) = match t {
                    UcTarget::Gradient => ("gradient", UcFamily::DoublePhase(ModularKind::Gradient), 500),
                    UcTarget::ZeroOrder => ("zero_order", UcFamily::DoublePhase(ModularKind::ZeroOrder), 200),
                    UcTarget::Sobolev => ("sobolev", UcFamily::DoublePhase(ModularKind::Sobolev), 200),
                    _ => ("three_phase", UcFamily::ThreePhase, 200),
                };
                (name, sweep::uc_sweep_with(family, samples_or(cfg, default), seed, &ranges, epsilons))
            }
        };
        let tally = tally.map_err(numerical)?;
        ok &= tally.fail == 0;
        summary.push_str(&tally_line(name, &tally));
        tallies.insert(name.into(), to_value(&tally));
    }
    let results = json!({ "ranges": to_value(&ranges), "tallies": tallies, "all_pass": ok });
    Ok(Outcome { results, ok, summary, csv: None })
}

fn cmd_check_monotone(cfg: &Config) -> Result<Outcome, RunError> {
    let tally = sweep::monotone_sweep(samples_or(cfg, 1_000_000), cfg.raw.seed);
    let ok = tally.fail == 0;
    let summary = tally_line("monotone", &tally);
    let results = json!({ "tallies": { "monotone": to_value(&tally) }, "all_pass": ok });
    Ok(Outcome { results, ok, summary, csv: None })
}

/// Relative deviation accepted from equality at `h = 2`.
const PARALLELOGRAM_TOLERANCE: f64 = 1e-12;

fn cmd_check_inequalities(cfg: &Config) -> Result<Outcome, RunError> {
    let ranges = cfg.phase_ranges()?;
    let seed = cfg.raw.seed;
    let two_point = sweep::two_point_sweep(samples_or(cfg, 1_000_000), seed).map_err(numerical)?;
    let deviation = sweep::parallelogram_deviation(samples_or(cfg, 10_000), seed).map_err(numerical)?;
    let scalar = sweep::scalar_sweep(samples_or(cfg, 100_000), seed);
    let components = sweep::component_sweep(samples_or(cfg, 200), seed, &ranges).map_err(numerical)?;
    let parallelogram_ok = deviation <= PARALLELOGRAM_TOLERANCE;
    let ok = two_point.fail == 0
        && scalar.fail == 0
        && parallelogram_ok
        && components.components.fail == 0
        && components.remainder.fail == 0
        && components.set_identity.fail == 0;
    let mut summary = tally_line("two_point", &two_point);
    let _ = writeln!(summary, "parallelogram: max relative deviation {deviation:e}");
    summary.push_str(&tally_line("scalar", &scalar));
    summary.push_str(&tally_line("components", &components.components));
    let results = json!({
        "tallies": {
            "two_point": to_value(&two_point),
            "scalar": to_value(&scalar),
            "components": to_value(&components),
        },
        "parallelogram": { "max_relative_deviation": deviation, "tolerance": PARALLELOGRAM_TOLERANCE, "holds": parallelogram_ok },
        "all_pass": ok,
    });
    Ok(Outcome { results, ok, summary, csv: None })
}

fn cmd_check_sandwich(cfg: &Config) -> Result<Outcome, RunError> {
    let ranges = cfg.phase_ranges()?;
    let seed = cfg.raw.seed;
    let random = sweep::norm_sweep(samples_or(cfg, 200), seed, &ranges).map_err(numerical)?;
    // the configured structure, against seeded random fields
    let mut own = Tally::default();
    let mut own_ok = 0;
    let n = samples_or(cfg, 50);
    for i in 0..n {
        let mut rng = sweep::sample_rng(seed, i as u64);
        let u = sweep::random_field(&mut rng, &cfg.grid, false);
        let mut holds = true;
        for k in ModularKind::ALL {
            holds &= modular::norm_modular_sandwich(&u, &cfg.phase, k).map_err(numerical)?.holds;
            holds &= modular::overline_equivalence_check(&u, &cfg.phase, k).map_err(numerical)?.holds;
        }
        own_ok += usize::from(holds);
        if !holds {
            own.fail += 1;
            own.first_failure.get_or_insert(i);
        }
    }
    own.samples = n;
    own.pass = own_ok;
    let ok = [&random.unit_modular, &random.homogeneity, &random.sandwich, &random.equivalence, &own]
        .iter()
        .all(|t| t.fail == 0);
    let mut summary = String::new();
    for (name, t) in [
        ("unit_modular", &random.unit_modular),
        ("homogeneity", &random.homogeneity),
        ("sandwich", &random.sandwich),
        ("equivalence", &random.equivalence),
        ("config", &own),
    ] {
        summary.push_str(&tally_line(name, t));
    }
    let results = json!({ "random": to_value(&random), "config": to_value(&own), "all_pass": ok });
    Ok(Outcome { results, ok, summary, csv: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(extra: &str) -> Config {
        parse_config(&format!(
            r#"{{ "domain": {{ "dim": 1, "extents": [[0, 1]], "resolution": [16] }}, "p": "2" {extra} }}"#
        ))
        .unwrap()
    }

    #[test]
    fn norm_of_one_is_one_over_root_two() {
        let out = cmd_norm(&cfg(""), "1", Some(ModularKind::ZeroOrder)).unwrap();
        let norm = out.results["norms"]["zero_order"]["norm"].as_f64().unwrap();
        assert!((norm - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-9);
        assert!(out.results["norms"].get("gradient").is_none());
        assert_eq!(out.results["modular"]["zero_order"], json!(0.5));
        assert!(out.ok);
    }

    #[test]
    fn norm_of_zero_is_zero() {
        let out = cmd_norm(&cfg(""), "0", None).unwrap();
        for k in ModularKind::ALL {
            assert_eq!(out.results["norms"][k.name()]["norm"], json!(0.0));
            assert_eq!(out.results["modular"][k.name()], json!(0.0));
        }
    }

    #[test]
    fn norm_field_errors_are_config_errors() {
        assert_eq!(cmd_norm(&cfg(""), "x +", None).unwrap_err().exit_code(), EXIT_CONFIG);
        assert_eq!(cmd_norm(&cfg(""), "y", None).unwrap_err().exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn csv_layout() {
        let c = cfg(r#", "f": "1""#);
        let out = cmd_solve(&c).unwrap();
        let csv = out.csv.unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,u,w");
        assert_eq!(lines.len(), 1 + c.grid.node_count());
        assert_eq!(lines[1], "0,0,0");
        assert!(out.ok);
    }

    #[test]
    fn epsilon_outside_range_names_the_bound() {
        let c = cfg(r#", "verify": { "samples": 2, "epsilons": [1.5] }"#);
        let err = cmd_verify_uc(&c).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
        assert!(err.message().contains("√(32/(m−1))"), "{}", err.message());
    }

    #[test]
    fn small_suites_pass() {
        let c = cfg(r#", "verify": { "samples": 20, "max_cells": 6 }"#);
        for out in [
            cmd_verify_uc(&c).unwrap(),
            cmd_check_monotone(&c).unwrap(),
            cmd_check_inequalities(&c).unwrap(),
            cmd_check_sandwich(&c).unwrap(),
        ] {
            assert!(out.ok, "{}", out.summary);
            assert_eq!(out.results["all_pass"], json!(true));
        }
    }

    #[test]
    fn tallies_sum_to_samples() {
        let c = cfg(r#", "verify": { "samples": 30, "max_cells": 6, "targets": ["gradient", "config"] }"#);
        let out = cmd_verify_uc(&c).unwrap();
        for name in ["gradient", "config"] {
            let t = &out.results["tallies"][name];
            let sum = t["pass"].as_u64().unwrap() + t["vacuous"].as_u64().unwrap() + t["fail"].as_u64().unwrap();
            assert_eq!(sum, 30);
            assert_eq!(t["samples"], json!(30));
        }
    }
}
