//! Minimisation of the fibered functional on `W_λ = {H_λ(v) < 0, G(v) = 1}`.
//!
//! On `W_λ` the fibered functional reduces to `(1/q - 1/p)|H_λ(v)|^{q/(q-p)}`,
//! and its minimiser `v_λ` generates the critical point `u_λ = t_{v_λ} v_λ` of
//! `J_λ`. The constraint `G = 1` is kept by rescaling after every step, which
//! leaves `J̃_λ` unchanged because it is 0-homogeneous.
//!
//! Descent directions are preconditioned by the lagged stiffness of the
//! Lagrangian `H_λ + (p|H_λ|/q) G` (whose gradient is a positive multiple of
//! `∇J̃_λ` on the constraint) and projected along `v` so that `G` is
//! stationary to first order.

use std::sync::Arc;

use serde::Serialize;

use crate::eigensolver::{lagged_coefficients, PrincipalPair};
use crate::error::{BestIterate, Error, Result};
use crate::functionals::{
    grad_parts, gradient_norm_power, jtilde_from, luxemburg_norm, nehari_residual, weak_residual,
    Energies, ProblemSpec, Terms,
};
use crate::grid::GridFunction;
use crate::linesearch::Armijo;
use crate::numeric::{dot, norm2, solve_stiffness};

/// Relative guard above `λ₁` below which no solution is reported.
pub const NO_SOLUTION_GUARD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum FiberInit {
    /// Start at `φ₁`, which lies in `W_λ` for every `λ > λ₁`.
    Principal,
    /// Start at a given profile (warm start); falls back to `φ₁` when it is
    /// not in `H_λ⁻`.
    Warm(GridFunction),
}

#[derive(Debug, Clone)]
pub struct FiberOptions {
    /// Relative change of `J̃_λ` between accepted iterates.
    pub tol_energy: f64,
    /// Bound on the normalised tangential gradient, see [`FiberSolution::kkt_residual`].
    pub tol_kkt: f64,
    pub max_iter: usize,
    pub init: FiberInit,
}

impl Default for FiberOptions {
    fn default() -> Self {
        Self {
            tol_energy: 1e-12,
            tol_kkt: 1e-8,
            max_iter: 100_000,
            init: FiberInit::Principal,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FiberSolution {
    #[serde(skip)]
    pub v_min: GridFunction,
    pub t_scale: f64,
    #[serde(skip)]
    pub u_sol: GridFunction,
    /// `J̃_λ(v_min)`, equal to `J_λ(u_sol)`.
    pub m_energy: f64,
    /// `H_λ(v_min)`.
    pub h_value: f64,
    /// `∫K|v_min|^p`.
    pub k_mass: f64,
    /// Backward error of the constrained stationarity condition:
    /// `‖P_T ∇L‖ / (‖∇N_p‖ + |λ|‖∇D‖ + μ‖∇G‖)` with `∇L = ∇H_λ + μ∇G`,
    /// `μ = p|H_λ|/(qG)` and `P_T` the projection onto the tangent space of `{G = 1}`.
    pub kkt_residual: f64,
    pub weak_residual: f64,
    pub iterations: usize,
    /// Whether the initial profile was a feasible warm start.
    pub warm_started: bool,
}

#[derive(Debug, Clone)]
pub enum SolveOutcome {
    Solved(Box<FiberSolution>),
    /// `λ ≤ λ₁(p)`: `H_λ⁻` is empty and `J_λ` has no nonzero critical point.
    NoSolution { lambda: f64, lambda1: f64 },
}

impl SolveOutcome {
    pub fn solution(self) -> Option<FiberSolution> {
        match self {
            SolveOutcome::Solved(s) => Some(*s),
            SolveOutcome::NoSolution { .. } => None,
        }
    }
}

struct State {
    values: Vec<f64>,
    energy: f64,
}

fn normalize_g(spec: &ProblemSpec, values: &mut [f64]) {
    let g = Terms::new(spec.grid(), values).gradient_energy(spec.grid(), spec.q());
    let s = g.powf(-1.0 / spec.q());
    values.iter_mut().for_each(|x| *x = x.abs() * s);
}

/// `(H, G, J̃)` of a nodal vector, or `None` outside `H_λ⁻`.
fn fibered(spec: &ProblemSpec, values: &[f64]) -> Option<(f64, f64, f64)> {
    let (e, _) = Energies::of(spec, values);
    let h = e.h(spec.lambda());
    let jt = jtilde_from(h, e.n_q, spec.p(), spec.q()).ok()?;
    Some((h, e.n_q, jt))
}

/// First-order data of `J̃_λ` restricted to `{G = 1}` at a point of `W_λ`.
struct Stationarity {
    terms: Terms,
    gg: Vec<f64>,
    /// `∇L = ∇H + μ∇G`, a positive multiple of `∇J̃_λ` on the constraint.
    grad_l: Vec<f64>,
    mu: f64,
    kappa: f64,
    /// Backward error `‖P_T ∇L‖ / (‖∇N_p‖ + |λ|‖∇D‖ + μ‖∇G‖)`.
    kkt: f64,
    /// Relative rounding level of `J̃_λ`.
    noise: f64,
}

impl Stationarity {
    fn at(spec: &ProblemSpec, v: &[f64]) -> Result<Self> {
        let (p, q, lambda) = (spec.p(), spec.q(), spec.lambda());
        let terms = Terms::new(spec.grid(), v);
        let (e, _) = Energies::of(spec, v);
        let h = e.h(lambda);
        let g = e.n_q;
        if !(h < 0.0) {
            return Err(Error::LeftHMinus);
        }
        let [gn, gd, gg] = grad_parts(spec, &terms, v)?;
        let mu = p * h.abs() / (q * g);
        let kappa = h.abs().powf(p / (q - p)) * g.powf(-p / (q - p)) / p;
        let grad_l: Vec<f64> = (0..v.len())
            .map(|i| gn[i] - lambda * gd[i] + mu * gg[i])
            .collect();
        let along = dot(&grad_l, &gg) / dot(&gg, &gg);
        let tangential: Vec<f64> = grad_l.iter().zip(&gg).map(|(a, b)| a - along * b).collect();
        let scale = norm2(&gn) + lambda.abs() * norm2(&gd) + mu * norm2(&gg);
        let noise = 64.0 * f64::EPSILON * (e.n_p + lambda.abs() * e.mass) / h.abs() * (q / (q - p)).abs();
        Ok(Self {
            terms,
            gg,
            grad_l,
            mu,
            kappa,
            kkt: norm2(&tangential) / scale,
            noise,
        })
    }
}

pub fn solve(spec: &ProblemSpec, pair: &PrincipalPair, opts: &FiberOptions) -> Result<SolveOutcome> {
    if pair.phi1.grid().n_nodes() != spec.grid().n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: spec.grid().n_nodes(),
            found: pair.phi1.grid().n_nodes(),
        });
    }
    let lambda = spec.lambda();
    if lambda <= pair.lambda1 * (1.0 + NO_SOLUTION_GUARD) {
        return Ok(SolveOutcome::NoSolution {
            lambda,
            lambda1: pair.lambda1,
        });
    }

    let (p, q) = (spec.p(), spec.q());
    let grid = spec.grid();
    let n = grid.n_nodes();

    let mut warm_started = false;
    let mut values = pair.phi1.values().to_vec();
    if let FiberInit::Warm(w) = &opts.init {
        if w.grid().n_nodes() == n && !w.is_zero() {
            let mut cand = w.values().to_vec();
            normalize_g(spec, &mut cand);
            if fibered(spec, &cand).is_some() {
                values = cand;
                warm_started = true;
            }
        }
    }
    normalize_g(spec, &mut values);
    let Some((_, _, energy)) = fibered(spec, &values) else {
        return Err(Error::LeftHMinus);
    };
    let mut state = State { values, energy };

    let armijo = Armijo::default();
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut here = Stationarity::at(spec, &state.values)?;

    loop {
        let v = &state.values;
        let m = state.energy;
        let kkt = here.kkt;
        if kkt < opts.tol_kkt && last_change < opts.tol_energy.max(here.noise) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        let mut coeff = vec![0.0; grid.n_cells()];
        lagged_coefficients(grid, &here.terms.grad, p, spec.grad_reg_eps(), 1.0, &mut coeff);
        lagged_coefficients(grid, &here.terms.grad, q, spec.grad_reg_eps(), here.mu, &mut coeff);
        let rhs: Vec<f64> = here.grad_l.iter().map(|x| -x).collect();
        let mut dir = solve_stiffness(grid.widths(), &coeff, &rhs)
            .ok_or_else(|| Error::InvalidProblem("singular preconditioner".into()))?;
        let radial = dot(&here.gg, &dir) / dot(&here.gg, v);
        dir.iter_mut().zip(v).for_each(|(d, x)| *d -= radial * x);
        let slope = here.kappa * dot(&here.grad_l, &dir);

        let trial = |alpha: f64| -> Option<(Vec<f64>, f64)> {
            let mut w: Vec<f64> = v.iter().zip(&dir).map(|(x, d)| x + alpha * d).collect();
            normalize_g(spec, &mut w);
            let (_, _, jt) = fibered(spec, &w)?;
            Some((w, jt))
        };
        iterations += 1;

        // Once the predicted decrease drowns in the rounding of J̃ (the
        // cancellation in H near λ₁), the merit function can no longer rank
        // trial points; steps are then accepted on the stationarity measure.
        let resolvable = slope.abs() > 16.0 * here.noise * m.abs();
        let mut any_feasible = false;
        let mut accepted = None;
        if resolvable {
            let step = armijo.search(m, slope, 1.0, |alpha| {
                let r = trial(alpha).map(|(_, jt)| jt);
                any_feasible |= r.is_some();
                r
            });
            if let Some(step) = step {
                let (w, jt) = trial(step.alpha).ok_or(Error::LeftHMinus)?;
                let st = Stationarity::at(spec, &w)?;
                accepted = Some((w, jt, st));
            }
        }
        if accepted.is_none() {
            let mut alpha = 1.0;
            while alpha >= 1e-6 {
                if let Some((w, jt)) = trial(alpha) {
                    any_feasible = true;
                    // never trade a resolvable energy increase for stationarity
                    if !resolvable || jt <= m {
                        let st = Stationarity::at(spec, &w)?;
                        if st.kkt < kkt {
                            accepted = Some((w, jt, st));
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
        }
        let Some((w, energy, st)) = accepted else {
            if !any_feasible {
                return Err(Error::LeftHMinus);
            }
            // no representable progress left: stationary to working precision
            converged = kkt < opts.tol_kkt;
            break;
        };
        last_change = (m - energy).abs() / energy.abs();
        state = State { values: w, energy };
        here = st;
    }

    let kkt = here.kkt;
    let sol = finish(spec, state, kkt, iterations, warm_started)?;
    if converged {
        Ok(SolveOutcome::Solved(Box::new(sol)))
    } else {
        Err(Error::NoConvergence {
            iterations,
            residual: kkt,
            best: Some(BestIterate::Fiber(Box::new(sol))),
        })
    }
}

fn finish(
    spec: &ProblemSpec,
    state: State,
    kkt_residual: f64,
    iterations: usize,
    warm_started: bool,
) -> Result<FiberSolution> {
    let grid = Arc::clone(spec.grid());
    let (e, _) = Energies::of(spec, &state.values);
    let h_value = e.h(spec.lambda());
    let (p, q) = (spec.p(), spec.q());
    let m_energy = jtilde_from(h_value, e.n_q, p, q)?;
    let t_scale = (h_value.abs() / e.n_q).powf(1.0 / (q - p));
    let v_min = GridFunction::with_values_unchecked(Arc::clone(&grid), state.values);
    let u_sol = v_min.scaled(t_scale);
    let weak = weak_residual(spec, &u_sol)?;
    Ok(FiberSolution {
        v_min,
        t_scale,
        u_sol,
        m_energy,
        h_value,
        k_mass: e.mass,
        kkt_residual,
        weak_residual: weak,
        iterations,
        warm_started,
    })
}

/// Quality diagnostics of a computed solution.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub weak_residual: f64,
    pub nehari_residual: f64,
    /// Minimum of `u` over interior nodes.
    pub positivity_margin: f64,
    pub interior_max: f64,
    /// Maximum of `u` over the last 10% of nodes.
    pub tail_max: f64,
    pub luxemburg_norm: f64,
    /// `‖u‖_q = G(u)^{1/q}`.
    pub q_norm: f64,
    /// One-sided difference `(u_1 - u_0)/Δr_0` at the inner sphere (informational).
    pub inner_slope: f64,
    /// Set when `u ≡ 0`.
    pub trivial: bool,
}

impl VerificationReport {
    pub fn tail_ratio(&self) -> f64 {
        if self.interior_max > 0.0 {
            self.tail_max / self.interior_max
        } else {
            0.0
        }
    }
}

pub fn verify_solution(spec: &ProblemSpec, u: &GridFunction) -> Result<VerificationReport> {
    let vals = u.values();
    let n = vals.len();
    let interior = &vals[1..n - 1];
    let trivial = u.is_zero();
    let tail_start = n - (n / 10).max(1);
    let tail_max = vals[tail_start..].iter().fold(0.0_f64, |m, x| m.max(*x));
    let interior_max = interior.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    let positivity_margin = interior.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    Ok(VerificationReport {
        weak_residual: weak_residual(spec, u)?,
        nehari_residual: if trivial { 0.0 } else { nehari_residual(spec, u)? },
        positivity_margin,
        interior_max,
        tail_max,
        luxemburg_norm: luxemburg_norm(spec, u)?,
        q_norm: gradient_norm_power(u, spec.q()).powf(1.0 / spec.q()),
        inner_slope: (vals[1] - vals[0]) / spec.grid().widths()[0],
        trivial,
    })
}

/// `t ↦ J_λ(t v)` from the scalar values of `H_λ(v)` and `G(v)`.
pub fn fiber_map(spec: &ProblemSpec, h_value: f64, g_value: f64, t: f64) -> f64 {
    let a = t.abs();
    a.powf(spec.p()) / spec.p() * h_value + a.powf(spec.q()) / spec.q() * g_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver::{compute_principal_pair, EigenOptions, RayleighProblem};
    use crate::functionals::{eval_g, eval_j};
    use crate::grid::{build_grid, sample_weight, Spacing, WeightKind};
    use approx::assert_relative_eq;

    fn setup(n_cells: usize, p: f64, q: f64) -> (ProblemSpec, PrincipalPair) {
        let grid = Arc::new(build_grid(1.0, 20.0, n_cells, Spacing::Uniform, 5).unwrap());
        let weight = Arc::new(sample_weight(&grid, &WeightKind::power_decay(1.0, p + 1.0), None).unwrap());
        let spec = ProblemSpec::new(grid, weight, p, q, 0.0, 1e-8).unwrap();
        let pair = compute_principal_pair(&RayleighProblem::from_spec(&spec), &EigenOptions::default()).unwrap();
        (spec, pair)
    }

    #[test]
    fn below_threshold_has_no_solution() {
        let (spec, pair) = setup(100, 2.0, 4.0);
        for f in [0.5, 1.0] {
            let out = solve(&spec.with_lambda(f * pair.lambda1), &pair, &FiberOptions::default()).unwrap();
            assert!(matches!(out, SolveOutcome::NoSolution { .. }));
        }
    }

    #[test]
    fn solution_invariants_p_less_than_q() {
        let (spec, pair) = setup(200, 2.0, 4.0);
        let lambda = 2.0 * pair.lambda1;
        let spec = spec.with_lambda(lambda);
        let sol = solve(&spec, &pair, &FiberOptions::default()).unwrap().solution().unwrap();
        assert!(sol.m_energy < 0.0);
        assert!(sol.h_value < 0.0);
        assert_relative_eq!(eval_g(&spec, &sol.v_min).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(sol.t_scale, sol.h_value.abs().powf(0.5), max_relative = 1e-12);
        assert_relative_eq!(eval_g(&spec, &sol.u_sol).unwrap().powf(0.25), sol.t_scale, max_relative = 1e-12);
        assert!(sol.u_sol.values().iter().all(|&x| x >= 0.0));
        // upper bound from starting at φ₁
        let bound = (2.0 - 4.0) / 8.0 * pair.h_at(lambda).abs().powf(2.0);
        assert!(sol.m_energy <= bound);
        // J(u) agrees with the fibered value
        assert_relative_eq!(eval_j(&spec, &sol.u_sol).unwrap(), sol.m_energy, max_relative = 1e-10);
        // m′ relation
        let h = -((8.0 / 2.0) * sol.m_energy.abs()).powf(2.0 / 4.0);
        assert_relative_eq!(h, sol.h_value, max_relative = 1e-10);
        // local minimum of the fiber map
        let phi = |t: f64| fiber_map(&spec, sol.h_value, 1.0, t);
        let t = sol.t_scale;
        assert!(phi(t * (1.0 + 1e-3)) > phi(t) && phi(t * (1.0 - 1e-3)) > phi(t));
    }

    #[test]
    fn solution_invariants_p_greater_than_q() {
        let (spec, pair) = setup(200, 3.0, 2.0);
        let spec = spec.with_lambda(2.0 * pair.lambda1);
        let sol = solve(&spec, &pair, &FiberOptions::default()).unwrap().solution().unwrap();
        assert!(sol.m_energy > 0.0);
        let phi = |t: f64| fiber_map(&spec, sol.h_value, 1.0, t);
        let t = sol.t_scale;
        assert!(phi(t * (1.0 + 1e-3)) < phi(t) && phi(t * (1.0 - 1e-3)) < phi(t));
        let h = -((6.0 / 1.0) * sol.m_energy.abs()).powf(-1.0 / 2.0);
        assert_relative_eq!(h, sol.h_value, max_relative = 1e-10);
    }

    #[test]
    fn verification_of_trivial_function() {
        let (spec, _) = setup(50, 2.0, 4.0);
        let z = GridFunction::zeros(spec.grid().clone());
        let rep = verify_solution(&spec, &z).unwrap();
        assert!(rep.trivial);
        assert_eq!(rep.weak_residual, 0.0);
    }

    #[test]
    fn warm_start_falls_back_when_infeasible() {
        let (spec, pair) = setup(100, 2.0, 4.0);
        let spec = spec.with_lambda(1.5 * pair.lambda1);
        // a wildly oscillating profile has H > 0
        let bad = GridFunction::from_fn(spec.grid().clone(), |r| (40.0 * r).sin());
        let opts = FiberOptions {
            init: FiberInit::Warm(bad),
            ..FiberOptions::default()
        };
        let sol = solve(&spec, &pair, &opts).unwrap().solution().unwrap();
        assert!(!sol.warm_started);
    }
}
