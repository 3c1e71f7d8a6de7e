//! Command-line front end: configuration, subcommands and exit codes.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | configuration or I/O error |
//! | 2 | a solver did not converge (or too many sweep rungs failed) |
//! | 3 | no nontrivial solution: `λ ≤ λ₁(p)` |
//! | 4 | a check failed, or `DegenerateGradient` / insufficient sweep data |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgAction, Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::eigensolver::{compute_principal_pair, EigenOptions, PrincipalPair, RayleighProblem};
use crate::error::{BestIterate, Error, Result};
use crate::fibering::{solve, verify_solution, FiberOptions, FiberSolution, SolveOutcome};
use crate::functionals::{luxemburg_norm, ProblemSpec, DEFAULT_GRAD_REG_EPS};
use crate::grid::{build_grid, sample_weight, GridFunction, IntegrabilityCheck, Spacing, WeightKind};
use crate::sweep::{
    check_asymptotics, emit_outputs, fmt_f64, run_sweep, write_atomic, OutputPaths, Reference, Regime,
    Status, SweepPlan, DEFAULT_J_FAR, DEFAULT_K_EDGE,
};
use crate::verify::{run_suite, SuiteConfig};

/// The only environment variable read: overrides `output.dir` (flags still win).
pub const OUT_DIR_ENV: &str = "EXTERIOR_FIBERING_OUT";

pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const NO_CONVERGENCE: i32 = 2;
    pub const NO_SOLUTION: i32 = 3;
    pub const CHECK_FAILED: i32 = 4;
}

#[derive(Debug, Parser)]
#[command(name = "exterior-fibering", version, about = "Fibering-method solver for the (p,q)-Laplacian on radial exterior domains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Principal eigenpair (λ₁(p), φ₁).
    Eigen,
    /// Ground state u_λ for one λ.
    Solve,
    /// λ-ladders towards λ₁ and infinity with asymptotic checks.
    Sweep,
    /// Oracle agreements and invariant batteries.
    Verify,
}

/// Command-line overrides; each one wins over the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML (or JSON, by extension) configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// λ as a multiple of the computed λ₁(p).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda_ratio: Option<f64>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub q: Option<f64>,
    /// Space dimension N.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, action = ArgAction::Set, value_name = "BOOL")]
    pub warm_start: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub p: f64,
    pub q: f64,
    pub dim_n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_ratio: Option<f64>,
    pub grad_reg_eps: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            p: 2.0,
            q: 4.0,
            dim_n: 5,
            lambda: None,
            lambda_ratio: None,
            grad_reg_eps: DEFAULT_GRAD_REG_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub r_inner: f64,
    pub r_outer: f64,
    pub n_cells: usize,
    pub spacing: Spacing,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            r_inner: 1.0,
            r_outer: 20.0,
            n_cells: 2000,
            spacing: Spacing::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    PowerDecay,
    CustomTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSection {
    pub kind: WeightChoice,
    pub kappa: f64,
    /// Defaults to `p + 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// One value per cell for `custom_table`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    pub integrability_tolerance: f64,
}

impl Default for WeightSection {
    fn default() -> Self {
        Self {
            kind: WeightChoice::PowerDecay,
            kappa: 1.0,
            alpha: None,
            values: None,
            integrability_tolerance: IntegrabilityCheck::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenSection {
    fn default() -> Self {
        let d = EigenOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberSection {
    pub tol_energy: f64,
    pub tol_kkt: f64,
    pub max_iter: usize,
}

impl Default for FiberSection {
    fn default() -> Self {
        let d = FiberOptions::default();
        Self {
            tol_energy: d.tol_energy,
            tol_kkt: d.tol_kkt,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub k_edge: u32,
    pub j_far: u32,
    pub warm_start: bool,
    /// Non-converged rungs tolerated before exiting with code 2.
    pub max_failures: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            k_edge: DEFAULT_K_EDGE,
            j_far: DEFAULT_J_FAR,
            warm_start: false,
            max_failures: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Seed of the random batteries in `verify`.
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub grid: GridSection,
    pub weight: WeightSection,
    pub eigen: EigenSection,
    pub fibering: FiberSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
    pub run: RunSection,
}

fn invalid(msg: String) -> Error {
    Error::Config(msg)
}

impl RunConfig {
    /// Parses TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    /// Applies flag overrides, then the output-directory environment
    /// override (unless `--out` was given), fills derived defaults and
    /// validates.
    pub fn resolve(mut self, o: &Overrides, env_out: Option<PathBuf>) -> Result<Self> {
        let pr = &mut self.problem;
        if let Some(p) = o.p {
            pr.p = p;
        }
        if let Some(q) = o.q {
            pr.q = q;
        }
        if let Some(n) = o.dim {
            pr.dim_n = n;
        }
        if o.lambda.is_some() {
            pr.lambda = o.lambda;
            pr.lambda_ratio = None;
        }
        if o.lambda_ratio.is_some() {
            pr.lambda_ratio = o.lambda_ratio;
            if o.lambda.is_none() {
                pr.lambda = None;
            }
        }
        if let Some(w) = o.warm_start {
            self.sweep.warm_start = w;
        }
        if o.workers.is_some() {
            self.run.workers = o.workers;
        }
        if let Some(dir) = o.out.clone().or(env_out) {
            self.output.dir = dir;
        }
        if self.weight.kind == WeightChoice::PowerDecay && self.weight.alpha.is_none() {
            self.weight.alpha = Some(self.problem.p + 1.0);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ProblemSection {
            p, q, dim_n, lambda, lambda_ratio, grad_reg_eps,
        } = self.problem;
        let n = dim_n as f64;
        if dim_n < 2 {
            return Err(invalid(format!("problem.dim_n = {dim_n} must be at least 2")));
        }
        if p == q {
            return Err(invalid(format!("problem.p = problem.q = {p}: the exponents must satisfy p ≠ q")));
        }
        for (name, v) in [("p", p), ("q", q)] {
            if !(v > 1.0 && v < n) {
                return Err(invalid(format!("problem.{name} = {v} must lie in (1, N) = (1, {dim_n})")));
            }
        }
        if lambda.is_some() && lambda_ratio.is_some() {
            return Err(invalid("problem.lambda and problem.lambda_ratio are mutually exclusive".into()));
        }
        if lambda.is_some_and(|l| !l.is_finite()) || lambda_ratio.is_some_and(|l| !l.is_finite()) {
            return Err(invalid("problem.lambda must be finite".into()));
        }
        if !(grad_reg_eps >= 0.0 && grad_reg_eps.is_finite()) {
            return Err(invalid(format!("problem.grad_reg_eps = {grad_reg_eps} must be ≥ 0")));
        }
        let g = &self.grid;
        if !(g.r_inner > 0.0) {
            return Err(invalid(format!("grid.r_inner = {} must be positive", g.r_inner)));
        }
        if !(g.r_outer > g.r_inner) {
            return Err(invalid(format!(
                "grid.r_outer = {} must exceed grid.r_inner = {}",
                g.r_outer, g.r_inner
            )));
        }
        if g.n_cells < 2 {
            return Err(invalid(format!("grid.n_cells = {} must be at least 2", g.n_cells)));
        }
        let w = &self.weight;
        match w.kind {
            WeightChoice::PowerDecay => {
                let alpha = w.alpha.unwrap_or(p + 1.0);
                if !(alpha > p) {
                    return Err(invalid(format!("weight.alpha = {alpha} must exceed p = {p}")));
                }
                if !(w.kappa > 0.0) {
                    return Err(invalid(format!("weight.kappa = {} must be positive", w.kappa)));
                }
            }
            WeightChoice::CustomTable => match &w.values {
                Some(v) if v.len() == g.n_cells => {}
                Some(v) => {
                    return Err(invalid(format!(
                        "weight.values has {} entries, grid.n_cells is {}",
                        v.len(),
                        g.n_cells
                    )))
                }
                None => return Err(invalid("weight.values is required for a custom_table weight".into())),
            },
        }
        if self.run.workers == Some(0) {
            return Err(invalid("run.workers must be at least 1".into()));
        }
        if !(self.eigen.tol > 0.0) || !(self.fibering.tol_kkt > 0.0) || !(self.fibering.tol_energy > 0.0) {
            return Err(invalid("solver tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serialises")
    }

    pub fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            tol: self.eigen.tol,
            max_iter: self.eigen.max_iter,
            ..EigenOptions::default()
        }
    }

    pub fn fiber_options(&self) -> FiberOptions {
        FiberOptions {
            tol_energy: self.fibering.tol_energy,
            tol_kkt: self.fibering.tol_kkt,
            max_iter: self.fibering.max_iter,
            ..FiberOptions::default()
        }
    }

    /// Grid, weight and a `λ = 0` problem template.
    pub fn build(&self) -> Result<ProblemSpec> {
        let g = &self.grid;
        let pr = &self.problem;
        let grid = Arc::new(build_grid(g.r_inner, g.r_outer, g.n_cells, g.spacing, pr.dim_n)?);
        let kind = match self.weight.kind {
            WeightChoice::PowerDecay => {
                WeightKind::power_decay(self.weight.kappa, self.weight.alpha.unwrap_or(pr.p + 1.0))
            }
            WeightChoice::CustomTable => WeightKind::CustomTable {
                values: self.weight.values.clone().unwrap_or_default(),
            },
        };
        let check = IntegrabilityCheck {
            tolerance: self.weight.integrability_tolerance,
            ..IntegrabilityCheck::for_exponent(pr.p, pr.dim_n)
        };
        let weight = Arc::new(sample_weight(&grid, &kind, Some(check))?);
        ProblemSpec::new(grid, weight, pr.p, pr.q, 0.0, pr.grad_reg_eps)
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoConvergence { .. } | Error::LeftHMinus => exit::NO_CONVERGENCE,
        Error::DegenerateGradient { .. } | Error::InsufficientData(_) | Error::EmptyFeasibleSet => {
            exit::CHECK_FAILED
        }
        Error::NotInHMinus { .. } => exit::NO_SOLUTION,
        _ => exit::CONFIG,
    }
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let base = match &cli.overrides.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let cfg = base.resolve(&cli.overrides, env_out)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.run.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Eigen => cmd_eigen(&cfg),
        Command::Solve => cmd_solve(&cfg),
        Command::Sweep => cmd_sweep(&cfg),
        Command::Verify => cmd_verify(&cfg),
    })
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.output.dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("config.resolved.toml"), cfg.to_toml().as_bytes())?;
    Ok(dir)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

fn write_profile(path: &Path, column: &str, f: &GridFunction) -> Result<()> {
    let mut out = format!("r,{column}\n");
    for (r, v) in f.grid().nodes().iter().zip(f.values()) {
        let _ = writeln!(out, "{},{}", fmt_f64(*r), fmt_f64(*v));
    }
    write_atomic(path, out.as_bytes())
}

/// The principal pair, or the best iterate with `converged = false`.
fn principal(cfg: &RunConfig, spec: &ProblemSpec) -> Result<(PrincipalPair, bool)> {
    let problem = RayleighProblem::from_spec(spec);
    match compute_principal_pair(&problem, &cfg.eigen_options()) {
        Ok(pair) => Ok((pair, true)),
        Err(Error::NoConvergence {
            best: Some(BestIterate::Principal(pair)),
            iterations,
            residual,
        }) => {
            eprintln!("eigensolver: no convergence after {iterations} iterations (residual {residual:.3e})");
            Ok((*pair, false))
        }
        Err(e) => Err(e),
    }
}

fn cmd_eigen(cfg: &RunConfig) -> Result<i32> {
    let spec = cfg.build()?;
    let (pair, converged) = principal(cfg, &spec)?;
    let dir = out_dir(cfg)?;
    write_profile(&dir.join("phi1.csv"), "phi1", &pair.phi1)?;
    write_json(
        &dir.join("eigen.json"),
        &json!({
            "version": env!("CARGO_PKG_VERSION"),
            "converged": converged,
            "principal": pair,
            "config": cfg.echo(),
        }),
    )?;
    println!("lambda1 = {}", fmt_f64(pair.lambda1));
    println!(
        "iterations = {}, gradient residual = {:.3e}",
        pair.iterations, pair.gradient_residual
    );
    Ok(if converged { exit::OK } else { exit::NO_CONVERGENCE })
}

fn solution_json(spec: &ProblemSpec, sol: &FiberSolution, lambda1: f64, converged: bool) -> Result<serde_json::Value> {
    let verification = verify_solution(spec, &sol.u_sol)?;
    Ok(json!({
        "status": if converged { "solved" } else { "no_convergence" },
        "lambda": spec.lambda(),
        "lambda1": lambda1,
        "solution": sol,
        "x_norm": luxemburg_norm(spec, &sol.u_sol)?,
        "verification": verification,
    }))
}

fn cmd_solve(cfg: &RunConfig) -> Result<i32> {
    let template = cfg.build()?;
    let (pair, eig_ok) = principal(cfg, &template)?;
    if !eig_ok {
        return Ok(exit::NO_CONVERGENCE);
    }
    let lambda = match (cfg.problem.lambda, cfg.problem.lambda_ratio) {
        (Some(l), _) => l,
        (None, Some(r)) => r * pair.lambda1,
        (None, None) => {
            return Err(Error::Config(
                "solve needs problem.lambda or problem.lambda_ratio (--lambda / --lambda-ratio)".into(),
            ))
        }
    };
    let spec = template.with_lambda(lambda);
    let dir = out_dir(cfg)?;
    let mut doc = match solve(&spec, &pair, &cfg.fiber_options()) {
        Ok(SolveOutcome::NoSolution { lambda, lambda1 }) => {
            // a profile left by an earlier run would contradict solve.json
            let stale = dir.join("solution.csv");
            if stale.exists() {
                fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
            }
            println!(
                "no nontrivial solution for λ ≤ λ₁(p): λ = {}, λ₁(p) = {} \
                 (a nonzero solution exists if and only if λ > λ₁(p))",
                fmt_f64(lambda),
                fmt_f64(lambda1)
            );
            write_json(
                &dir.join("solve.json"),
                &json!({
                    "version": env!("CARGO_PKG_VERSION"),
                    "status": "no_solution",
                    "lambda": lambda,
                    "lambda1": lambda1,
                    "config": cfg.echo(),
                }),
            )?;
            return Ok(exit::NO_SOLUTION);
        }
        Ok(SolveOutcome::Solved(sol)) => {
            write_profile(&dir.join("solution.csv"), "u", &sol.u_sol)?;
            println!("lambda = {}", fmt_f64(lambda));
            println!("energy = {}", fmt_f64(sol.m_energy));
            println!("t = {}, iterations = {}", fmt_f64(sol.t_scale), sol.iterations);
            println!("weak residual = {:.3e}", sol.weak_residual);
            (solution_json(&spec, &sol, pair.lambda1, true)?, exit::OK)
        }
        Err(Error::NoConvergence {
            best: Some(BestIterate::Fiber(sol)),
            iterations,
            residual,
        }) => {
            eprintln!("fibering: no convergence after {iterations} iterations (residual {residual:.3e})");
            write_profile(&dir.join("solution.csv"), "u", &sol.u_sol)?;
            (solution_json(&spec, &sol, pair.lambda1, false)?, exit::NO_CONVERGENCE)
        }
        Err(e) => return Err(e),
    };
    doc.0["version"] = json!(env!("CARGO_PKG_VERSION"));
    doc.0["config"] = cfg.echo();
    write_json(&dir.join("solve.json"), &doc.0)?;
    Ok(doc.1)
}

fn cmd_sweep(cfg: &RunConfig) -> Result<i32> {
    let template = cfg.build()?;
    let (pair, eig_ok) = principal(cfg, &template)?;
    if !eig_ok {
        return Ok(exit::NO_CONVERGENCE);
    }
    let plan = SweepPlan::ladders(
        pair.lambda1,
        cfg.sweep.k_edge,
        cfg.sweep.j_far,
        cfg.fiber_options(),
        cfg.sweep.warm_start,
    )?;
    info!("sweeping {} values of λ", plan.len());
    let records = run_sweep(&template, &pair, &plan)?;
    let regime = Regime::of(cfg.problem.p, cfg.problem.q);
    let verdict = match check_asymptotics(&records, regime, &Reference::from(&pair)) {
        Ok(v) => Some(v),
        Err(Error::InsufficientData(msg)) => {
            eprintln!("insufficient data: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    let dir = out_dir(cfg)?;
    emit_outputs(&records, verdict.as_ref(), pair.lambda1, &cfg.echo(), &OutputPaths::in_dir(dir))?;

    println!("lambda1 = {}", fmt_f64(pair.lambda1));
    let failures = records.iter().filter(|r| !r.converged).count();
    println!("records = {}, not converged = {failures}", records.len());
    let Some(verdict) = verdict else {
        return Ok(exit::CHECK_FAILED);
    };
    for c in &verdict.checks {
        let tag = match c.status {
            Status::Pass => "pass",
            Status::Warn => "warn",
            Status::Fail => "FAIL",
        };
        println!("[{tag}] {}: {}", c.name, c.detail);
    }
    Ok(if failures > cfg.sweep.max_failures {
        exit::NO_CONVERGENCE
    } else if verdict.passed() {
        exit::OK
    } else {
        exit::CHECK_FAILED
    })
}

fn cmd_verify(cfg: &RunConfig) -> Result<i32> {
    let spec = cfg.build()?;
    let suite = SuiteConfig {
        grid: Arc::clone(spec.grid()),
        weight: Arc::clone(spec.weight()),
        p: cfg.problem.p,
        q: cfg.problem.q,
        grad_reg_eps: cfg.problem.grad_reg_eps,
        eigen: cfg.eigen_options(),
        seed: cfg.run.seed,
    };
    let dir = out_dir(cfg)?;
    let report = match run_suite(&suite) {
        Ok(r) => r,
        Err(e) => {
            write_json(
                &dir.join("verify.json"),
                &json!({
                    "version": env!("CARGO_PKG_VERSION"),
                    "passed": false,
                    "error": e.to_string(),
                    "config": cfg.echo(),
                }),
            )?;
            return Err(e);
        }
    };
    for c in &report.checks {
        println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    write_json(
        &dir.join("verify.json"),
        &json!({
            "version": env!("CARGO_PKG_VERSION"),
            "passed": report.passed(),
            "checks": report.checks,
            "config": cfg.echo(),
        }),
    )?;
    Ok(if report.passed() { exit::OK } else { exit::CHECK_FAILED })
}
