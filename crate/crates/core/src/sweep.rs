//! λ-ladders towards both ends of the existence interval `(λ₁, ∞)`, checks of
//! the limiting behaviour of the energy and the q-norm, and CSV/JSON/SVG
//! output.
//!
//! Divergence and convergence to zero cannot be observed on a finite ladder;
//! they are tested as strict monotone trends with the extreme value at the
//! limiting end and, for unbounded claims, a dynamic range of at least 10².

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolver::PrincipalPair;
use crate::error::{BestIterate, Error, Result};
use crate::fibering::{solve, FiberInit, FiberOptions, FiberSolution, SolveOutcome};
use crate::functionals::{gradient_norm_power, ProblemSpec};
use crate::grid::GridFunction;

pub const DEFAULT_K_EDGE: u32 = 6;
pub const DEFAULT_J_FAR: u32 = 16;
/// Minimum ratio between the extreme rungs for an "unbounded" trend.
pub const MIN_DYNAMIC_RANGE: f64 = 1e2;
/// Allowed relative growth of `max k_mass` when a ladder gains one rung.
pub const MASS_DRIFT_TOLERANCE: f64 = 0.1;
/// Relative slack on the upper energy bound through `φ₁`.
pub const BOUND_SLACK: f64 = 1e-9;

pub const CSV_HEADER: &str = "lambda,j_energy,q_norm,h_value,k_mass,weak_residual,converged";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub lambda: f64,
    /// `J_λ(u_λ)`.
    pub j_energy: f64,
    /// `‖u_λ‖_q`.
    pub q_norm: f64,
    /// `H_λ(v_λ)`.
    pub h_value: f64,
    /// `∫K|v_λ|^p`.
    pub k_mass: f64,
    pub weak_residual: f64,
    pub converged: bool,
}

impl SweepRecord {
    pub fn from_solution(spec: &ProblemSpec, sol: &FiberSolution, converged: bool) -> Self {
        Self {
            lambda: spec.lambda(),
            j_energy: sol.m_energy,
            q_norm: gradient_norm_power(&sol.u_sol, spec.q()).powf(1.0 / spec.q()),
            h_value: sol.h_value,
            k_mass: sol.k_mass,
            weak_residual: sol.weak_residual,
            converged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Ladder {
    NearEdge,
    FarTail,
}

impl Ladder {
    /// Near-edge rungs sit below `2λ₁`, where the far ladder starts.
    pub fn classify(lambda: f64, lambda1: f64) -> Self {
        if lambda < 2.0 * lambda1 {
            Ladder::NearEdge
        } else {
            Ladder::FarTail
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub lambda1_ref: f64,
    /// `λ₁(1 + 10^{-k})`, `k = 1..K_edge`.
    pub near_edge: Vec<f64>,
    /// `λ₁ 2^j`, `j = 1..J_far`.
    pub far_tail: Vec<f64>,
    pub fiber: FiberOptions,
    /// Start each solve from the neighbouring rung's minimiser. Forces a
    /// sequential sweep.
    pub warm_start: bool,
}

impl SweepPlan {
    pub fn ladders(lambda1: f64, k_edge: u32, j_far: u32, fiber: FiberOptions, warm_start: bool) -> Result<Self> {
        let near_edge = (1..=k_edge)
            .map(|k| lambda1 * (1.0 + 10f64.powi(-(k as i32))))
            .collect();
        let far_tail = (1..=j_far).map(|j| lambda1 * 2f64.powi(j as i32)).collect();
        Self::new(lambda1, near_edge, far_tail, fiber, warm_start)
    }

    pub fn new(
        lambda1: f64,
        near_edge: Vec<f64>,
        far_tail: Vec<f64>,
        fiber: FiberOptions,
        warm_start: bool,
    ) -> Result<Self> {
        if !(lambda1.is_finite() && lambda1 > 0.0) {
            return Err(Error::InvalidProblem(format!("reference λ₁ = {lambda1} must be positive")));
        }
        if let Some(bad) = near_edge
            .iter()
            .chain(&far_tail)
            .find(|l| !(l.is_finite() && **l > lambda1))
        {
            return Err(Error::InvalidProblem(format!(
                "sweep value λ = {bad} must exceed λ₁ = {lambda1}"
            )));
        }
        Ok(Self {
            lambda1_ref: lambda1,
            near_edge,
            far_tail,
            fiber,
            warm_start,
        })
    }

    pub fn len(&self) -> usize {
        self.near_edge.len() + self.far_tail.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn solve_record(
    spec: &ProblemSpec,
    pair: &PrincipalPair,
    lambda: f64,
    opts: &FiberOptions,
) -> Result<(SweepRecord, GridFunction)> {
    let spec = spec.with_lambda(lambda);
    let (sol, converged) = match solve(&spec, pair, opts) {
        Ok(SolveOutcome::Solved(sol)) => (*sol, true),
        Ok(SolveOutcome::NoSolution { lambda, lambda1 }) => {
            return Err(Error::InvalidProblem(format!(
                "λ = {lambda} is not above λ₁ = {lambda1}"
            )))
        }
        Err(Error::NoConvergence {
            best: Some(BestIterate::Fiber(sol)),
            iterations,
            residual,
        }) => {
            warn!("λ = {lambda:e}: no convergence after {iterations} iterations (residual {residual:.3e})");
            (*sol, false)
        }
        Err(e) => return Err(e),
    };
    Ok((SweepRecord::from_solution(&spec, &sol, converged), sol.v_min))
}

/// Walks a ladder in the given order, warm-starting every solve from the
/// previous minimiser.
fn warm_chain(
    spec: &ProblemSpec,
    pair: &PrincipalPair,
    lambdas: impl Iterator<Item = f64>,
    opts: &FiberOptions,
) -> Result<Vec<SweepRecord>> {
    let mut out = Vec::new();
    let mut prev: Option<GridFunction> = None;
    for lambda in lambdas {
        let mut o = opts.clone();
        if let Some(v) = prev.take() {
            o.init = FiberInit::Warm(v);
        }
        let (rec, v) = solve_record(spec, pair, lambda, &o)?;
        out.push(rec);
        prev = Some(v);
    }
    Ok(out)
}

/// Solves every rung of `plan`; records come back sorted by λ.
///
/// Non-converged solves are kept with `converged = false` and the best
/// iterate's values; any other solver error aborts the sweep.
pub fn run_sweep(spec: &ProblemSpec, pair: &PrincipalPair, plan: &SweepPlan) -> Result<Vec<SweepRecord>> {
    if pair.lambda1 != plan.lambda1_ref {
        return Err(Error::InvalidProblem(format!(
            "plan built for λ₁ = {} but the principal pair has λ₁ = {}",
            plan.lambda1_ref, pair.lambda1
        )));
    }
    let mut records = if plan.warm_start {
        // both ladders start next to 2λ₁ and walk towards their limit
        let mut far = warm_chain(spec, pair, plan.far_tail.iter().copied(), &plan.fiber)?;
        let near = warm_chain(spec, pair, plan.near_edge.iter().copied(), &plan.fiber)?;
        far.extend(near);
        far
    } else {
        let lambdas: Vec<f64> = plan.near_edge.iter().chain(&plan.far_tail).copied().collect();
        lambdas
            .par_iter()
            .map(|&l| solve_record(spec, pair, l, &plan.fiber).map(|(r, _)| r))
            .collect::<Result<Vec<_>>>()?
    };
    records.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    #[serde(rename = "p<q")]
    PLessQ,
    #[serde(rename = "p>q")]
    PGreaterQ,
}

impl Regime {
    pub fn of(p: f64, q: f64) -> Self {
        if p < q {
            Regime::PLessQ
        } else {
            Regime::PGreaterQ
        }
    }
}

/// Principal-pair data the checks compare against.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Reference {
    pub lambda1: f64,
    /// `∫K|φ₁|^p` under `G(φ₁) = 1`.
    pub phi1_mass: f64,
    pub p: f64,
    pub q: f64,
}

impl From<&PrincipalPair> for Reference {
    fn from(pair: &PrincipalPair) -> Self {
        Self {
            lambda1: pair.lambda1,
            phi1_mass: pair.phi1_mass,
            p: pair.p,
            q: pair.q,
        }
    }
}

impl Reference {
    /// `J̃_λ(φ₁)`, an upper bound for the minimum at every `λ > λ₁`.
    pub fn energy_bound(&self, lambda: f64) -> f64 {
        let (p, q) = (self.p, self.q);
        (p - q) / (p * q) * ((self.lambda1 - lambda) * self.phi1_mass).abs().powf(q / (q - p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub regime: Regime,
    pub checks: Vec<Check>,
}

impl Verdict {
    /// No check failed; warnings are allowed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// One sub-trend: `values` ordered from the start of the ladder towards its
/// limiting end.
struct Trend<'a> {
    label: &'a str,
    values: Vec<(f64, f64)>,
    increasing: bool,
    unbounded: bool,
}

impl Trend<'_> {
    fn evaluate(&self) -> (Status, String) {
        let v = &self.values;
        let ordered = |a: f64, b: f64| if self.increasing { b > a } else { b < a };
        let inversions: Vec<String> = v
            .windows(2)
            .filter(|w| !ordered(w[0].1, w[1].1))
            .map(|w| format!("λ = {:e} → {:e}", w[0].0, w[1].0))
            .collect();
        let (last_l, last) = *v.last().expect("trend has data");
        let limit_ok = v[..v.len() - 1].iter().all(|&(_, x)| ordered(x, last));
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, x)| (lo.min(x), hi.max(x)));
        let range = hi / lo;
        let range_ok = !self.unbounded || range >= MIN_DYNAMIC_RANGE;
        let dir = if self.increasing { "increasing" } else { "decreasing" };
        if !limit_ok {
            let culprit = inversions.last().cloned().unwrap_or_default();
            (
                Status::Fail,
                format!("{} not {dir} towards the limit at λ = {last_l:e} ({culprit})", self.label),
            )
        } else if !range_ok {
            (
                Status::Fail,
                format!("{} dynamic range {range:.3e} below {MIN_DYNAMIC_RANGE:e}", self.label),
            )
        } else if !inversions.is_empty() {
            (
                Status::Warn,
                format!(
                    "{} {dir} with correct limit but not monotone at {}",
                    self.label,
                    inversions.join(", ")
                ),
            )
        } else {
            (Status::Pass, format!("{} strictly {dir}", self.label))
        }
    }
}

fn combine(name: &str, parts: Vec<(Status, String)>) -> Check {
    let status = parts.iter().map(|(s, _)| *s).max().unwrap_or(Status::Pass);
    if status == Status::Warn {
        for (s, d) in &parts {
            if *s == Status::Warn {
                warn!("{name}: {d}");
            }
        }
    }
    Check {
        name: name.to_string(),
        status,
        detail: parts.into_iter().map(|(_, d)| d).collect::<Vec<_>>().join("; "),
    }
}

/// The five limit checks on converged records:
///
/// 1. `sign`: `j_energy < 0` for `p < q`, `> 0` for `p > q`;
/// 2. `trend`: `|j_energy|` and `q_norm` move monotonically towards the
///    limit on each ladder (to zero, or without bound with range ≥ 10²);
/// 3. `h_to_zero`: `h_value < 0` with `|h_value|` decreasing towards `λ₁`;
/// 4. `mass_bounded`: `max k_mass` changes by less than 10% when each
///    ladder is extended by its last rung;
/// 5. `energy_bound`: `j_energy ≤ J̃_λ(φ₁)` at every record.
///
/// A monotonicity defect whose extreme value still sits at the limiting end
/// is reported as a warning.
pub fn check_asymptotics(records: &[SweepRecord], regime: Regime, reference: &Reference) -> Result<Verdict> {
    let lambda1 = reference.lambda1;
    let mut near: Vec<&SweepRecord> = Vec::new();
    let mut far: Vec<&SweepRecord> = Vec::new();
    for r in records.iter().filter(|r| r.converged) {
        match Ladder::classify(r.lambda, lambda1) {
            Ladder::NearEdge => near.push(r),
            Ladder::FarTail => far.push(r),
        }
    }
    if near.len() < 4 || far.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 converged records per ladder, found {} near λ₁ and {} in the far tail",
            near.len(),
            far.len()
        )));
    }
    // towards the limit: near ladder descends to λ₁, far ladder ascends
    near.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    far.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let all: Vec<&SweepRecord> = near.iter().chain(&far).copied().collect();

    let mut checks = Vec::with_capacity(5);

    let expect_negative = regime == Regime::PLessQ;
    let wrong_sign = all
        .iter()
        .find(|r| if expect_negative { !(r.j_energy < 0.0) } else { !(r.j_energy > 0.0) });
    let sign_word = if expect_negative { "negative" } else { "positive" };
    checks.push(match wrong_sign {
        None => Check {
            name: "sign".into(),
            status: Status::Pass,
            detail: format!("j_energy {sign_word} at all {} records", all.len()),
        },
        Some(r) => Check {
            name: "sign".into(),
            status: Status::Fail,
            detail: format!("j_energy = {:e} at λ = {:e}, expected {sign_word}", r.j_energy, r.lambda),
        },
    });

    // (near grows, far grows) per regime
    let (near_up, far_up) = match regime {
        Regime::PLessQ => (false, true),
        Regime::PGreaterQ => (true, false),
    };
    let series = |rs: &[&SweepRecord], f: fn(&SweepRecord) -> f64| -> Vec<(f64, f64)> {
        rs.iter().map(|r| (r.lambda, f(r))).collect()
    };
    let trends = [
        Trend {
            label: "near-edge |j_energy|",
            values: series(&near, |r| r.j_energy.abs()),
            increasing: near_up,
            unbounded: near_up,
        },
        Trend {
            label: "near-edge q_norm",
            values: series(&near, |r| r.q_norm),
            increasing: near_up,
            unbounded: near_up,
        },
        Trend {
            label: "far-tail |j_energy|",
            values: series(&far, |r| r.j_energy.abs()),
            increasing: far_up,
            unbounded: far_up,
        },
        Trend {
            label: "far-tail q_norm",
            values: series(&far, |r| r.q_norm),
            increasing: far_up,
            unbounded: far_up,
        },
    ];
    checks.push(combine("trend", trends.iter().map(Trend::evaluate).collect()));

    let mut h_parts = Vec::new();
    if let Some(r) = near.iter().find(|r| !(r.h_value < 0.0)) {
        h_parts.push((Status::Fail, format!("h_value = {:e} ≥ 0 at λ = {:e}", r.h_value, r.lambda)));
    }
    h_parts.push(
        Trend {
            label: "near-edge |h_value|",
            values: series(&near, |r| r.h_value.abs()),
            increasing: false,
            unbounded: false,
        }
        .evaluate(),
    );
    checks.push(combine("h_to_zero", h_parts));

    let c_obs = all.iter().fold(0.0_f64, |m, r| m.max(r.k_mass));
    let c_base = near[..near.len() - 1]
        .iter()
        .chain(&far[..far.len() - 1])
        .fold(0.0_f64, |m, r| m.max(r.k_mass));
    let drift = (c_obs - c_base) / c_base;
    checks.push(Check {
        name: "mass_bounded".into(),
        status: if c_obs.is_finite() && drift < MASS_DRIFT_TOLERANCE {
            Status::Pass
        } else {
            Status::Fail
        },
        detail: format!("max k_mass {c_obs:.6e}, {:.3}% above the ladder without its last rungs", 100.0 * drift),
    });

    let mut worst: Option<(f64, &SweepRecord)> = None;
    for r in &all {
        let bound = reference.energy_bound(r.lambda);
        let excess = (r.j_energy - bound) / bound.abs();
        if worst.is_none_or(|(e, _)| excess > e) {
            worst = Some((excess, r));
        }
    }
    let (excess, at) = worst.expect("records are non-empty");
    checks.push(Check {
        name: "energy_bound".into(),
        status: if excess <= BOUND_SLACK { Status::Pass } else { Status::Fail },
        detail: format!(
            "largest relative excess over the φ₁ bound {excess:.3e} at λ = {:e}",
            at.lambda
        ),
    });

    Ok(Verdict { regime, checks })
}

/// Locations of the sweep artefacts.
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub energy_svg: PathBuf,
    pub q_norm_svg: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            csv: dir.join("sweep.csv"),
            json: dir.join("sweep.json"),
            energy_svg: dir.join("sweep_energy.svg"),
            q_norm_svg: dir.join("sweep_q_norm.svg"),
        }
    }
}

/// Writes via a sibling temporary file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// 17 significant digits: parses back to the identical `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn records_to_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.lambda),
            fmt_f64(r.j_energy),
            fmt_f64(r.q_norm),
            fmt_f64(r.h_value),
            fmt_f64(r.k_mass),
            fmt_f64(r.weak_residual),
            r.converged
        );
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("sweep CSV header does not match".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| Error::Config(format!("sweep CSV line {}: {what}", i + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let num = |k: usize| fields[k].parse::<f64>().map_err(|_| bad(fields[k]));
            Ok(SweepRecord {
                lambda: num(0)?,
                j_energy: num(1)?,
                q_norm: num(2)?,
                h_value: num(3)?,
                k_mass: num(4)?,
                weak_residual: num(5)?,
                converged: fields[6].parse().map_err(|_| bad(fields[6]))?,
            })
        })
        .collect()
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 56.0;

/// Static SVG of `y` against `λ` (logarithmic axis) with a dashed vertical
/// guide at `λ₁`. The vertical axis uses `asinh(y/s)` with `s` the smallest
/// non-zero `|y|`, which keeps sign and spreads values over many decades.
pub fn render_svg(points: &[(f64, f64)], lambda1: f64, title: &str, y_label: &str) -> String {
    let lx = |l: f64| l.log10();
    let x0 = lx(lambda1);
    let x_hi = points.iter().map(|p| lx(p.0)).fold(x0 + 1e-3, f64::max);
    let span = x_hi - x0;
    let (x_min, x_max) = (x0 - 0.05 * span, x_hi + 0.05 * span);

    let s = points
        .iter()
        .map(|p| p.1.abs())
        .filter(|a| *a > 0.0)
        .fold(f64::INFINITY, f64::min);
    let s = if s.is_finite() { s } else { 1.0 };
    let ty = |y: f64| (y / s).asinh();
    let (mut y_min, mut y_max) = points
        .iter()
        .fold((0.0_f64, 0.0_f64), |(lo, hi), p| (lo.min(ty(p.1)), hi.max(ty(p.1))));
    if y_max - y_min < 1e-12 {
        y_max += 1.0;
        y_min -= 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);

    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (SVG_W - MARGIN_L - MARGIN_R);
    let py = |y: f64| SVG_H - MARGIN_B - (y - y_min) / (y_max - y_min) * (SVG_H - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        SVG_W / 2.0,
        xml_escape(title)
    );
    let (ax_l, ax_r, ax_t, ax_b) = (MARGIN_L, SVG_W - MARGIN_R, MARGIN_T, SVG_H - MARGIN_B);
    let _ = writeln!(
        svg,
        r#"<path class="axes" d="M {ax_l:.2} {ax_t:.2} L {ax_l:.2} {ax_b:.2} L {ax_r:.2} {ax_b:.2}" fill="none" stroke="black"/>"#
    );
    if y_min < 0.0 && y_max > 0.0 {
        let z = py(0.0);
        let _ = writeln!(
            svg,
            r#"<line class="zero" x1="{ax_l:.2}" y1="{z:.2}" x2="{ax_r:.2}" y2="{z:.2}" stroke="gray" stroke-width="0.5"/>"#
        );
    }
    let g = px(x0);
    let _ = writeln!(
        svg,
        r#"<line class="asymptote" x1="{g:.2}" y1="{ax_t:.2}" x2="{g:.2}" y2="{ax_b:.2}" stroke="gray" stroke-dasharray="6,4"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{g:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">λ₁ = {}</text>"#,
        ax_b + 16.0,
        short(lambda1)
    );
    if let Some(last) = points.iter().map(|p| p.0).reduce(f64::max) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            px(lx(last)),
            ax_b + 16.0,
            short(last)
        );
        let (lo, hi) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
        for v in [lo, hi] {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                ax_l - 6.0,
                py(ty(v)) + 4.0,
                short(v)
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">λ (log scale)</text>"#,
        (ax_l + ax_r) / 2.0,
        SVG_H - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (ax_t + ax_b) / 2.0,
        (ax_t + ax_b) / 2.0,
        xml_escape(y_label)
    );

    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let coords: Vec<(f64, f64)> = sorted.iter().map(|p| (px(lx(p.0)), py(ty(p.1)))).collect();
    if coords.len() >= 2 {
        let pts: Vec<String> = coords.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="curve" points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
    }
    for (x, y) in &coords {
        let _ = writeln!(svg, r#"<circle class="point" cx="{x:.2}" cy="{y:.2}" r="3" fill="steelblue"/>"#);
    }
    svg.push_str("</svg>\n");
    svg
}

fn short(x: f64) -> String {
    format!("{x:.4e}")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Serialize)]
struct SweepDocument<'a> {
    version: &'a str,
    lambda1: f64,
    config: &'a serde_json::Value,
    verdict: Option<&'a Verdict>,
    records: &'a [SweepRecord],
}

/// Writes the CSV, the JSON document (records, verdict, configuration echo,
/// `λ₁`, crate version) and both plots.
pub fn emit_outputs(
    records: &[SweepRecord],
    verdict: Option<&Verdict>,
    lambda1: f64,
    config: &serde_json::Value,
    paths: &OutputPaths,
) -> Result<()> {
    write_atomic(&paths.csv, records_to_csv(records).as_bytes())?;
    let doc = SweepDocument {
        version: env!("CARGO_PKG_VERSION"),
        lambda1,
        config,
        verdict,
        records,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&paths.json, json.as_bytes())?;
    let energy: Vec<(f64, f64)> = records.iter().map(|r| (r.lambda, r.j_energy)).collect();
    let q_norm: Vec<(f64, f64)> = records.iter().map(|r| (r.lambda, r.q_norm)).collect();
    write_atomic(
        &paths.energy_svg,
        render_svg(&energy, lambda1, "Energy of the ground state", "J(u)").as_bytes(),
    )?;
    write_atomic(
        &paths.q_norm_svg,
        render_svg(&q_norm, lambda1, "q-norm of the ground state", "‖u‖_q").as_bytes(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const REF: Reference = Reference {
        lambda1: 10.0,
        phi1_mass: 0.5,
        p: 2.0,
        q: 4.0,
    };

    /// Records satisfying the fibering identities exactly for `h`.
    fn synthetic(lambda: f64, h: f64, p: f64, q: f64) -> SweepRecord {
        SweepRecord {
            lambda,
            j_energy: (1.0 / q - 1.0 / p) * h.abs().powf(q / (q - p)),
            q_norm: h.abs().powf(1.0 / (q - p)),
            h_value: h,
            k_mass: 0.5,
            weak_residual: 0.0,
            converged: true,
        }
    }

    /// `H(v_λ) = (λ₁ - λ) k` is the value at `φ₁`, so the bound holds with equality.
    fn ladder(reference: &Reference) -> Vec<SweepRecord> {
        let plan = SweepPlan::ladders(reference.lambda1, 6, 16, FiberOptions::default(), false).unwrap();
        plan.near_edge
            .iter()
            .chain(&plan.far_tail)
            .map(|&l| synthetic(l, (reference.lambda1 - l) * reference.phi1_mass, reference.p, reference.q))
            .collect()
    }

    #[test]
    fn plan_ladders() {
        let plan = SweepPlan::ladders(3.0, 6, 4, FiberOptions::default(), false).unwrap();
        assert_eq!(plan.near_edge.len(), 6);
        assert_eq!(plan.far_tail, vec![6.0, 12.0, 24.0, 48.0]);
        assert!((plan.near_edge[5] / 3.0 - 1.0 - 1e-6).abs() < 1e-15);
        assert!(SweepPlan::new(3.0, vec![3.0], vec![], FiberOptions::default(), false).is_err());
    }

    #[test]
    fn synthetic_records_pass() {
        let v = check_asymptotics(&ladder(&REF), Regime::PLessQ, &REF).unwrap();
        assert!(v.passed(), "{v:#?}");
        assert!(v.checks.iter().all(|c| c.status == Status::Pass), "{v:#?}");
        assert_eq!(v.checks.len(), 5);

        let rev = Reference { p: 4.0, q: 2.0, ..REF };
        let v = check_asymptotics(&ladder(&rev), Regime::PGreaterQ, &rev).unwrap();
        assert!(v.checks.iter().all(|c| c.status == Status::Pass), "{v:#?}");
    }

    #[test]
    fn inverted_q_norm_at_the_limit_fails_with_pair() {
        let mut recs = ladder(&REF);
        // swap the q-norms of the two largest λ in the far tail
        let n = recs.len();
        let (a, b) = (recs[n - 2].q_norm, recs[n - 1].q_norm);
        recs[n - 2].q_norm = b;
        recs[n - 1].q_norm = a;
        let v = check_asymptotics(&recs, Regime::PLessQ, &REF).unwrap();
        let trend = v.check("trend").unwrap();
        assert_eq!(trend.status, Status::Fail);
        let pair = format!("λ = {:e} → {:e}", recs[n - 2].lambda, recs[n - 1].lambda);
        assert!(trend.detail.contains(&pair), "{}", trend.detail);
        assert!(!v.passed());
    }

    #[test]
    fn interior_inversion_is_a_warning() {
        let mut recs = ladder(&REF);
        // far tail rungs 2λ₁, 4λ₁, … start at index 6; perturb one in the middle
        recs[9].q_norm = 0.5 * (recs[8].q_norm + recs[7].q_norm);
        let v = check_asymptotics(&recs, Regime::PLessQ, &REF).unwrap();
        assert_eq!(v.check("trend").unwrap().status, Status::Warn);
        assert!(v.passed());
    }

    #[test]
    fn sign_and_bound_failures() {
        let mut recs = ladder(&REF);
        recs[10].j_energy = 1.0;
        let v = check_asymptotics(&recs, Regime::PLessQ, &REF).unwrap();
        assert_eq!(v.check("sign").unwrap().status, Status::Fail);
        assert_eq!(v.check("energy_bound").unwrap().status, Status::Fail);
    }

    #[test]
    fn mass_drift_fails() {
        let mut recs = ladder(&REF);
        let n = recs.len();
        recs[n - 1].k_mass = 0.6;
        let v = check_asymptotics(&recs, Regime::PLessQ, &REF).unwrap();
        assert_eq!(v.check("mass_bounded").unwrap().status, Status::Fail);
    }

    #[test]
    fn insufficient_data() {
        let plan = SweepPlan::ladders(REF.lambda1, 0, 1, FiberOptions::default(), false).unwrap();
        let recs: Vec<_> = plan
            .far_tail
            .iter()
            .map(|&l| synthetic(l, (REF.lambda1 - l) * REF.phi1_mass, 2.0, 4.0))
            .collect();
        assert!(matches!(
            check_asymptotics(&recs, Regime::PLessQ, &REF),
            Err(Error::InsufficientData(_))
        ));
        // non-converged records do not count
        let mut recs = ladder(&REF);
        recs[0].converged = false;
        recs[1].converged = false;
        recs[2].converged = false;
        assert!(check_asymptotics(&recs, Regime::PLessQ, &REF).is_err());
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(records_to_csv(&[]), format!("{CSV_HEADER}\n"));
        assert!(records_from_csv(&records_to_csv(&[])).unwrap().is_empty());
    }

    #[test]
    fn single_point_svg() {
        let svg = render_svg(&[(20.0, -3.0)], 10.0, "t", "y");
        assert_eq!(svg.matches("<circle").count(), 1);
        assert_eq!(svg.matches("class=\"asymptote\"").count(), 1);
        assert!(svg.contains("stroke-dasharray"));
        assert!(!svg.contains("<polyline"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn emit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = OutputPaths::in_dir(dir.path());
        let recs = ladder(&REF);
        let v = check_asymptotics(&recs, Regime::PLessQ, &REF).unwrap();
        emit_outputs(&recs, Some(&v), REF.lambda1, &serde_json::json!({"p": 2.0}), &paths).unwrap();
        let parsed = records_from_csv(&fs::read_to_string(&paths.csv).unwrap()).unwrap();
        assert_eq!(parsed, recs);
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&paths.json).unwrap()).unwrap();
        assert_eq!(doc["records"].as_array().unwrap().len(), recs.len());
        assert_eq!(doc["verdict"]["checks"].as_array().unwrap().len(), 5);
        assert_eq!(doc["config"]["p"], 2.0);
        assert!(fs::read_to_string(&paths.q_norm_svg).unwrap().contains("<polyline"));
        // no temporaries left behind
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 4);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(
            vals in proptest::collection::vec(
                (any::<f64>(), -1e300f64..1e300, 0.0f64..1e300, any::<bool>()), 0..20)
        ) {
            let recs: Vec<SweepRecord> = vals
                .iter()
                .filter(|v| v.0.is_finite())
                .map(|&(a, b, c, conv)| SweepRecord {
                    lambda: a,
                    j_energy: b,
                    q_norm: c,
                    h_value: -c,
                    k_mass: b.abs(),
                    weak_residual: f64::MIN_POSITIVE,
                    converged: conv,
                })
                .collect();
            let back = records_from_csv(&records_to_csv(&recs)).unwrap();
            prop_assert_eq!(back.len(), recs.len());
            for (x, y) in back.iter().zip(&recs) {
                prop_assert_eq!(x.lambda.to_bits(), y.lambda.to_bits());
                prop_assert_eq!(x.j_energy.to_bits(), y.j_energy.to_bits());
                prop_assert_eq!(x.q_norm.to_bits(), y.q_norm.to_bits());
                prop_assert_eq!(x.h_value.to_bits(), y.h_value.to_bits());
                prop_assert_eq!(x.k_mass.to_bits(), y.k_mass.to_bits());
                prop_assert_eq!(x.converged, y.converged);
            }
        }
    }
}
