//! Principal eigenpair of the weighted p-Laplacian on the truncated shell.
//!
//! `λ₁(p) = inf N_p(u) / D(u)` is computed by projected descent on the
//! Rayleigh quotient. Each step preconditions the quotient gradient with the
//! lagged p-Laplacian stiffness (exact for p = 2, where a unit step is one
//! inverse-iteration sweep), removes the radial component, backtracks with
//! Armijo on the quotient, takes the absolute value and renormalises to
//! `D(u) = 1`. The converged eigenfunction is finally rescaled to `G(φ₁) = 1`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{BestIterate, Error, Result};
use crate::functionals::{zero_boundary, ProblemSpec, Terms, DEFAULT_GRAD_REG_EPS};
use crate::grid::{GridFunction, RadialGrid, WeightField};
use crate::linesearch::Armijo;
use crate::numeric::{dot, norm2, solve_stiffness};

/// Data needed for the Rayleigh quotient: exponent `p`, weight, grid, and the
/// exponent `q` used only to normalise `φ₁`.
///
/// Unlike [`ProblemSpec`] this does not require `p < N`, so that the linear
/// case `p = 2` can be checked in dimensions 2 and 3.
#[derive(Debug, Clone)]
pub struct RayleighProblem {
    grid: Arc<RadialGrid>,
    weight: Arc<WeightField>,
    p: f64,
    q: f64,
    grad_reg_eps: f64,
}

impl RayleighProblem {
    pub fn new(grid: Arc<RadialGrid>, weight: Arc<WeightField>, p: f64, q: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) || !(q > 1.0 && q.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "exponents must exceed 1, got p = {p}, q = {q}"
            )));
        }
        if weight.samples().len() != grid.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_cells(),
                found: weight.samples().len(),
            });
        }
        Ok(Self {
            grid,
            weight,
            p,
            q,
            grad_reg_eps: DEFAULT_GRAD_REG_EPS,
        })
    }

    pub fn from_spec(spec: &ProblemSpec) -> Self {
        Self {
            grid: Arc::clone(spec.grid()),
            weight: Arc::clone(spec.weight()),
            p: spec.p(),
            q: spec.q(),
            grad_reg_eps: if spec.grad_reg_eps() > 0.0 {
                spec.grad_reg_eps()
            } else {
                DEFAULT_GRAD_REG_EPS
            },
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn weight(&self) -> &Arc<WeightField> {
        &self.weight
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `N_p(v) / D(v)`; infinite for `v` with zero mass.
    pub fn quotient(&self, v: &GridFunction) -> f64 {
        let terms = Terms::new(&self.grid, v.values());
        let (num, den) = self.parts(&terms);
        if den > 0.0 {
            num / den
        } else {
            f64::INFINITY
        }
    }

    fn parts(&self, terms: &Terms) -> (f64, f64) {
        (
            terms.gradient_energy(&self.grid, self.p),
            terms.mass(&self.grid, self.weight.samples(), self.p),
        )
    }
}

#[derive(Debug, Clone)]
pub enum EigenInit {
    /// Piecewise-linear tent peaking at `min(2 r_inner, (r_inner + r_outer)/2)`.
    Hat,
    Custom(GridFunction),
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Bound on `‖∇R(u)‖ ‖u‖ / R(u)`.
    pub tol: f64,
    pub max_iter: usize,
    pub init: EigenInit,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50_000,
            init: EigenInit::Hat,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrincipalPair {
    pub lambda1: f64,
    #[serde(skip)]
    pub phi1: GridFunction,
    /// `|N_p(φ₁) - λ₁ D(φ₁)| / N_p(φ₁)`.
    pub rayleigh_residual: f64,
    /// Normalised quotient-gradient norm at exit.
    pub gradient_residual: f64,
    pub iterations: usize,
    /// `∫K|φ₁|^p` with the `G(φ₁) = 1` normalisation.
    pub phi1_mass: f64,
    pub p: f64,
    pub q: f64,
}

impl PrincipalPair {
    /// `H_λ(φ₁) = (λ₁ - λ) ∫K|φ₁|^p`.
    pub fn h_at(&self, lambda: f64) -> f64 {
        (self.lambda1 - lambda) * self.phi1_mass
    }
}

/// Whether `φ₁ ∈ H_λ⁻`, i.e. `H_λ(φ₁) < 0`.
///
/// Uses `H_λ(φ₁) = (λ₁ - λ)∫K|φ₁|^p`, which holds exactly for the discrete
/// quotient because `λ₁` is the quotient of the returned `φ₁`.
pub fn assert_membership(pair: &PrincipalPair, lambda: f64) -> bool {
    pair.h_at(lambda) < 0.0
}

fn hat_profile(grid: &Arc<RadialGrid>) -> GridFunction {
    let (a, b) = (grid.r_inner(), grid.r_outer());
    let peak = (2.0 * a).min(0.5 * (a + b));
    GridFunction::from_fn(Arc::clone(grid), |r| {
        if r <= peak {
            (r - a) / (peak - a)
        } else {
            (b - r) / (b - peak)
        }
    })
}

/// Cell coefficients `p(p-1) w_i (g_i² + δ²)^{(p-2)/2}` of the lagged stiffness.
pub(crate) fn lagged_coefficients(
    grid: &RadialGrid,
    grad: &[f64],
    s: f64,
    eps: f64,
    scale: f64,
    out: &mut [f64],
) {
    let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    // s > 2 degenerates where g = 0, so the curvature is floored relative to
    // the profile; s < 2 blows up there and is only capped at the
    // regularisation scale so that near-flat cells stay stiff.
    let delta = if s > 2.0 { 1e-3 * gmax } else { eps.max(1e-12 * gmax) }.max(f64::MIN_POSITIVE);
    for (i, g) in grad.iter().enumerate() {
        let rho = if s == 2.0 {
            1.0
        } else {
            (g * g + delta * delta).powf(0.5 * (s - 2.0))
        };
        out[i] += scale * s * (s - 1.0) * grid.cell_weights()[i] * rho;
    }
}

struct Iterate {
    values: Vec<f64>,
    quotient: f64,
}

/// Gradient of the Rayleigh quotient at a `D = 1` iterate.
struct QuotientGradient {
    terms: Terms,
    den: f64,
    grad: Vec<f64>,
    g_den: Vec<f64>,
    /// Backward error `‖N′ − R D′‖ / (‖N′‖ + R‖D′‖)`, independent of the
    /// scale of the weights.
    residual: f64,
    /// Maps `‖grad‖` to `residual`.
    normaliser: f64,
}

impl QuotientGradient {
    fn at(problem: &RayleighProblem, u: &[f64]) -> Result<Self> {
        let grid = &problem.grid;
        let n = u.len();
        let terms = Terms::new(grid, u);
        let (num, den) = problem.parts(&terms);
        let r = num / den;
        let mut g_num = vec![0.0; n];
        terms.add_gradient_energy_derivative(grid, problem.p, problem.grad_reg_eps, 1.0, &mut g_num)?;
        let mut g_den = vec![0.0; n];
        terms.add_mass_derivative(grid, problem.weight.samples(), u, problem.p, 1.0, &mut g_den);
        zero_boundary(&mut g_num);
        zero_boundary(&mut g_den);
        let grad: Vec<f64> = g_num
            .iter()
            .zip(&g_den)
            .map(|(a, b)| (a - r * b) / den)
            .collect();
        let normaliser = den / (norm2(&g_num) + r * norm2(&g_den));
        Ok(Self {
            residual: norm2(&grad) * normaliser,
            terms,
            den,
            grad,
            g_den,
            normaliser,
        })
    }

    /// Residual change caused by perturbing each node of `u` by one unit in
    /// the last place: the level below which the residual carries no
    /// information on this grid.
    fn rounding_floor(&self, problem: &RayleighProblem, u: &[f64]) -> Result<f64> {
        let jittered: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, x)| x * (1.0 + if i % 2 == 0 { f64::EPSILON } else { -f64::EPSILON }))
            .collect();
        let other = Self::at(problem, &jittered)?;
        let diff: Vec<f64> = other.grad.iter().zip(&self.grad).map(|(a, b)| a - b).collect();
        Ok(norm2(&diff) * self.normaliser)
    }
}

pub fn compute_principal_pair(problem: &RayleighProblem, opts: &EigenOptions) -> Result<PrincipalPair> {
    let grid = &problem.grid;
    let k = problem.weight.samples();
    let p = problem.p;
    let init = match &opts.init {
        EigenInit::Hat => hat_profile(grid),
        EigenInit::Custom(v) => {
            if v.grid().n_nodes() != grid.n_nodes() {
                return Err(Error::DimensionMismatch {
                    expected: grid.n_nodes(),
                    found: v.grid().n_nodes(),
                });
            }
            v.clone()
        }
    };
    let mut values: Vec<f64> = init.values().iter().map(|x| x.abs()).collect();
    let d0 = Terms::new(grid, &values).mass(grid, k, p);
    if !(d0 > 0.0) {
        return Err(Error::InvalidProblem("initial profile has zero mass".into()));
    }
    let s0 = d0.powf(-1.0 / p);
    values.iter_mut().for_each(|x| *x *= s0);
    let mut current = Iterate {
        quotient: problem.quotient(&GridFunction::with_values_unchecked(Arc::clone(grid), values.clone())),
        values,
    };

    let armijo = Armijo::default();
    let mut here = QuotientGradient::at(problem, &current.values)?;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        if here.residual < opts.tol {
            converged = true;
            break;
        }
        let u = &current.values;
        let r = current.quotient;

        let mut coeff = vec![0.0; grid.n_cells()];
        lagged_coefficients(grid, &here.terms.grad, p, problem.grad_reg_eps, 1.0 / here.den, &mut coeff);
        let rhs: Vec<f64> = here.grad.iter().map(|g| -g).collect();
        let mut dir = solve_stiffness(grid.widths(), &coeff, &rhs)
            .ok_or_else(|| Error::InvalidProblem("singular preconditioner".into()))?;
        // remove the component that changes D to first order; R is 0-homogeneous
        let radial = dot(&here.g_den, &dir) / dot(&here.g_den, u);
        dir.iter_mut().zip(u).for_each(|(d, x)| *d -= radial * x);
        let slope = dot(&here.grad, &dir);

        let trial = |alpha: f64| -> Option<(Vec<f64>, f64)> {
            let mut w: Vec<f64> = u.iter().zip(&dir).map(|(x, d)| (x + alpha * d).abs()).collect();
            let (a, b) = problem.parts(&Terms::new(grid, &w));
            if !(b > 0.0) {
                return None;
            }
            let scale = b.powf(-1.0 / p);
            w.iter_mut().for_each(|x| *x *= scale);
            Some((w, a / b))
        };
        iterations += 1;

        // Below the rounding level of R the quotient cannot rank trial
        // points; steps are then accepted when they reduce the residual.
        let resolvable = slope.abs() > 16.0 * f64::EPSILON * r;
        let mut accepted = None;
        if resolvable {
            if let Some(step) = armijo.search(r, slope, 1.0, |alpha| trial(alpha).map(|(_, q)| q)) {
                let (w, q) = trial(step.alpha).expect("accepted step is feasible");
                let next = QuotientGradient::at(problem, &w)?;
                accepted = Some((w, q, next));
            }
        }
        if accepted.is_none() {
            let mut alpha = 1.0;
            while alpha >= 1e-6 {
                if let Some((w, q)) = trial(alpha) {
                    if !resolvable || q <= r {
                        let next = QuotientGradient::at(problem, &w)?;
                        if next.residual < here.residual {
                            accepted = Some((w, q, next));
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
        }
        let Some((w, quotient, next)) = accepted else {
            let floor = here.rounding_floor(problem, &current.values)?;
            // no step helps: accept only if the residual is rounding noise
            converged = here.residual <= floor;
            break;
        };
        current = Iterate { values: w, quotient };
        here = next;
    }
    let residual = here.residual;

    let pair = finish(problem, current, residual, iterations);
    if converged {
        Ok(pair)
    } else {
        Err(Error::NoConvergence {
            iterations,
            residual,
            best: Some(BestIterate::Principal(Box::new(pair))),
        })
    }
}

fn finish(problem: &RayleighProblem, it: Iterate, residual: f64, iterations: usize) -> PrincipalPair {
    let grid = &problem.grid;
    let g = Terms::new(grid, &it.values).gradient_energy(grid, problem.q);
    let scale = g.powf(-1.0 / problem.q);
    let phi: Vec<f64> = it.values.iter().map(|x| x * scale).collect();
    let terms = Terms::new(grid, &phi);
    let (num, den) = problem.parts(&terms);
    let lambda1 = num / den;
    debug_assert!((lambda1 - it.quotient).abs() <= 1e-10 * lambda1);
    PrincipalPair {
        lambda1,
        rayleigh_residual: (num - lambda1 * den).abs() / num,
        phi1: GridFunction::with_values_unchecked(Arc::clone(grid), phi),
        gradient_residual: residual,
        iterations,
        phi1_mass: den,
        p: problem.p,
        q: problem.q,
    }
}
