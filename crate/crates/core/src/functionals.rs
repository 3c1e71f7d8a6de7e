//! Discrete energies of the (p,q)-Laplacian problem and their derivatives.
//!
//! With cell gradients `g_i` and midpoint magnitudes `m_i = (|v_i|+|v_{i+1}|)/2`:
//!
//! ```text
//! N_s(v) = Σ w_i |g_i|^s            (∫|∇v|^s)
//! D(v)   = Σ w_i K_i m_i^p          (∫K|v|^p)
//! H_λ(v) = N_p(v) - λ D(v)
//! G(v)   = N_q(v)
//! J_λ(v) = H_λ(v)/p + G(v)/q
//! ```
//!
//! On `H_λ⁻ = {H_λ < 0}` the fiber `t ↦ J_λ(t v)` has the stationary scale
//! `t_v = (|H_λ(v)|/G(v))^{1/(q-p)}` and the fibered functional is
//! `J̃_λ(v) = (1/q - 1/p) |H_λ(v)|^{q/(q-p)} / G(v)^{p/(q-p)}`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{cell_gradient, cell_magnitude, GridFunction, RadialGrid, WeightField, WeightKind};
use crate::numeric::compensated_sum;

pub const DEFAULT_GRAD_REG_EPS: f64 = 1e-8;

/// Exponents, dimension, eigenvalue parameter and weight of one problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    grid: Arc<RadialGrid>,
    weight: Arc<WeightField>,
    p: f64,
    q: f64,
    lambda: f64,
    grad_reg_eps: f64,
}

impl ProblemSpec {
    pub fn new(
        grid: Arc<RadialGrid>,
        weight: Arc<WeightField>,
        p: f64,
        q: f64,
        lambda: f64,
        grad_reg_eps: f64,
    ) -> Result<Self> {
        let n = grid.dim_n() as f64;
        if !(p > 1.0 && p < n) {
            return Err(Error::InvalidProblem(format!(
                "p must lie in (1, N) = (1, {n}), got {p}"
            )));
        }
        if !(q > 1.0 && q < n) {
            return Err(Error::InvalidProblem(format!(
                "q must lie in (1, N) = (1, {n}), got {q}"
            )));
        }
        if p == q {
            return Err(Error::InvalidProblem(format!("p ≠ q is required, got p = q = {p}")));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidProblem(format!("lambda must be finite, got {lambda}")));
        }
        if !(grad_reg_eps >= 0.0 && grad_reg_eps.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "grad_reg_eps must be non-negative, got {grad_reg_eps}"
            )));
        }
        if let WeightKind::PowerDecay { alpha, .. } = weight.kind() {
            if !(*alpha > p) {
                return Err(Error::InvalidProblem(format!(
                    "weight decay alpha ({alpha}) must exceed p ({p})"
                )));
            }
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
            lambda,
            grad_reg_eps,
        })
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

    pub fn dim_n(&self) -> usize {
        self.grid.dim_n()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn grad_reg_eps(&self) -> f64 {
        self.grad_reg_eps
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_grad_reg_eps(&self, eps: f64) -> Self {
        Self {
            grad_reg_eps: eps,
            ..self.clone()
        }
    }

    fn check(&self, v: &GridFunction) -> Result<()> {
        if v.grid().n_nodes() != self.grid.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.n_nodes(),
                found: v.grid().n_nodes(),
            });
        }
        Ok(())
    }
}

/// Cellwise data of a nodal vector.
#[derive(Debug, Clone)]
pub(crate) struct Terms {
    pub grad: Vec<f64>,
    pub mag: Vec<f64>,
}

impl Terms {
    pub fn new(grid: &RadialGrid, values: &[f64]) -> Self {
        Self {
            grad: cell_gradient(grid, values),
            mag: cell_magnitude(values),
        }
    }

    /// `Σ w_i |g_i|^s`.
    pub fn gradient_energy(&self, grid: &RadialGrid, s: f64) -> f64 {
        compensated_sum(
            grid.cell_weights()
                .iter()
                .zip(&self.grad)
                .map(|(w, g)| w * g.abs().powf(s)),
        )
    }

    /// `Σ w_i K_i m_i^p`.
    pub fn mass(&self, grid: &RadialGrid, weight: &[f64], p: f64) -> f64 {
        compensated_sum(
            grid.cell_weights()
                .iter()
                .zip(weight)
                .zip(&self.mag)
                .map(|((w, k), m)| w * k * m.powf(p)),
        )
    }

    /// Adds `scale · ∇N_s` to `out`.
    ///
    /// For `s < 2` the factor `|g|^{s-2}` is evaluated as `(g² + ε²)^{(s-2)/2}`.
    pub fn add_gradient_energy_derivative(
        &self,
        grid: &RadialGrid,
        s: f64,
        eps: f64,
        scale: f64,
        out: &mut [f64],
    ) -> Result<()> {
        let n = self.grad.len();
        for i in 0..n {
            let g = self.grad[i];
            let factor = if s < 2.0 {
                if eps == 0.0 {
                    if g == 0.0 {
                        return Err(Error::DegenerateGradient { cell: i });
                    }
                    g.abs().powf(s - 2.0)
                } else {
                    (g * g + eps * eps).powf(0.5 * (s - 2.0))
                }
            } else if s == 2.0 {
                1.0
            } else {
                g.abs().powf(s - 2.0)
            };
            let flux = scale * s * grid.cell_weights()[i] * factor * g / grid.widths()[i];
            out[i] -= flux;
            out[i + 1] += flux;
        }
        Ok(())
    }

    /// Adds `scale · ∇D` to `out`.
    pub fn add_mass_derivative(
        &self,
        grid: &RadialGrid,
        weight: &[f64],
        values: &[f64],
        p: f64,
        scale: f64,
        out: &mut [f64],
    ) {
        for i in 0..self.mag.len() {
            let c = scale * 0.5 * p * grid.cell_weights()[i] * weight[i] * self.mag[i].powf(p - 1.0);
            out[i] += c * sign(values[i]);
            out[i + 1] += c * sign(values[i + 1]);
        }
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn zero_boundary(out: &mut [f64]) {
    let n = out.len();
    out[0] = 0.0;
    out[n - 1] = 0.0;
}

/// `H_λ`, `G`, `J_λ` and membership in `H_λ⁻` of one function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalReport {
    pub h_value: f64,
    pub g_value: f64,
    pub j_value: f64,
    pub in_h_minus: bool,
}

/// Evaluations shared by the public functions; computed once per call.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Energies {
    pub n_p: f64,
    pub n_q: f64,
    pub mass: f64,
}

impl Energies {
    pub fn of(spec: &ProblemSpec, values: &[f64]) -> (Self, Terms) {
        let terms = Terms::new(&spec.grid, values);
        let e = Self {
            n_p: terms.gradient_energy(&spec.grid, spec.p),
            n_q: terms.gradient_energy(&spec.grid, spec.q),
            mass: terms.mass(&spec.grid, spec.weight.samples(), spec.p),
        };
        (e, terms)
    }

    pub fn h(&self, lambda: f64) -> f64 {
        self.n_p - lambda * self.mass
    }
}

pub fn eval_h(spec: &ProblemSpec, v: &GridFunction) -> Result<f64> {
    spec.check(v)?;
    Ok(Energies::of(spec, v.values()).0.h(spec.lambda))
}

pub fn eval_g(spec: &ProblemSpec, v: &GridFunction) -> Result<f64> {
    spec.check(v)?;
    Ok(Terms::new(&spec.grid, v.values()).gradient_energy(&spec.grid, spec.q))
}

pub fn eval_j(spec: &ProblemSpec, u: &GridFunction) -> Result<f64> {
    Ok(report(spec, u)?.j_value)
}

/// `∫K|v|^p`.
pub fn eval_mass(spec: &ProblemSpec, v: &GridFunction) -> Result<f64> {
    spec.check(v)?;
    Ok(Terms::new(&spec.grid, v.values()).mass(&spec.grid, spec.weight.samples(), spec.p))
}

/// `∫|∇v|^s` for an arbitrary exponent.
pub fn gradient_norm_power(v: &GridFunction, s: f64) -> f64 {
    Terms::new(v.grid(), v.values()).gradient_energy(v.grid(), s)
}

pub fn report(spec: &ProblemSpec, v: &GridFunction) -> Result<FunctionalReport> {
    spec.check(v)?;
    let (e, _) = Energies::of(spec, v.values());
    let h_value = e.h(spec.lambda);
    let g_value = e.n_q;
    Ok(FunctionalReport {
        h_value,
        g_value,
        j_value: h_value / spec.p + g_value / spec.q,
        in_h_minus: h_value < 0.0 && !v.is_zero(),
    })
}

/// Nodal gradient of the (ε-regularised) discrete `J_λ`; boundary entries are zero.
pub fn grad_j(spec: &ProblemSpec, u: &GridFunction) -> Result<GridFunction> {
    spec.check(u)?;
    let values = grad_j_values(spec, u.values())?;
    Ok(GridFunction::with_values_unchecked(Arc::clone(&spec.grid), values))
}

pub(crate) fn grad_j_values(spec: &ProblemSpec, values: &[f64]) -> Result<Vec<f64>> {
    let terms = Terms::new(&spec.grid, values);
    let mut out = vec![0.0; values.len()];
    let eps = spec.grad_reg_eps;
    terms.add_gradient_energy_derivative(&spec.grid, spec.p, eps, 1.0 / spec.p, &mut out)?;
    terms.add_gradient_energy_derivative(&spec.grid, spec.q, eps, 1.0 / spec.q, &mut out)?;
    terms.add_mass_derivative(
        &spec.grid,
        spec.weight.samples(),
        values,
        spec.p,
        -spec.lambda / spec.p,
        &mut out,
    );
    zero_boundary(&mut out);
    Ok(out)
}

/// `∇H_λ` and `∇G` at `values`, boundary entries zeroed.
/// Nodal derivatives `(∇N_p, ∇D, ∇G)` with zero boundary entries.
pub(crate) fn grad_parts(spec: &ProblemSpec, terms: &Terms, values: &[f64]) -> Result<[Vec<f64>; 3]> {
    let n = values.len();
    let eps = spec.grad_reg_eps;
    let mut gn = vec![0.0; n];
    terms.add_gradient_energy_derivative(&spec.grid, spec.p, eps, 1.0, &mut gn)?;
    let mut gd = vec![0.0; n];
    terms.add_mass_derivative(&spec.grid, spec.weight.samples(), values, spec.p, 1.0, &mut gd);
    let mut gg = vec![0.0; n];
    terms.add_gradient_energy_derivative(&spec.grid, spec.q, eps, 1.0, &mut gg)?;
    zero_boundary(&mut gn);
    zero_boundary(&mut gd);
    zero_boundary(&mut gg);
    Ok([gn, gd, gg])
}

/// `|t_v| = (|H|/G)^{1/(q-p)}` from the scalar values of `H_λ(v)` and `G(v)`.
pub fn fiber_scale_from(h_value: f64, g_value: f64, p: f64, q: f64) -> Result<f64> {
    if !(h_value < 0.0) || !(g_value > 0.0) {
        return Err(Error::NotInHMinus { h_value });
    }
    Ok((h_value.abs() / g_value).powf(1.0 / (q - p)))
}

/// `J̃_λ = (1/q - 1/p) |H|^{q/(q-p)} / G^{p/(q-p)}` from scalar values.
pub fn jtilde_from(h_value: f64, g_value: f64, p: f64, q: f64) -> Result<f64> {
    if !(h_value < 0.0) || !(g_value > 0.0) {
        return Err(Error::NotInHMinus { h_value });
    }
    let d = q - p;
    Ok((1.0 / q - 1.0 / p) * h_value.abs().powf(q / d) / g_value.powf(p / d))
}

pub fn fiber_scale(spec: &ProblemSpec, v: &GridFunction) -> Result<f64> {
    let r = report(spec, v)?;
    fiber_scale_from(r.h_value, r.g_value, spec.p, spec.q)
}

pub fn eval_jtilde(spec: &ProblemSpec, v: &GridFunction) -> Result<f64> {
    let r = report(spec, v)?;
    jtilde_from(r.h_value, r.g_value, spec.p, spec.q)
}

/// `u = t_v |v|`, the nonnegative critical point generated by `v ∈ H_λ⁻`.
pub fn reconstruct_solution(spec: &ProblemSpec, v: &GridFunction) -> Result<GridFunction> {
    let t = fiber_scale(spec, v)?;
    Ok(v.abs().scaled(t))
}

/// Modular `∫ Ψ_{p,q}(|∇v|/α)` with `Ψ(t) = t^p/p + t^q/q`.
pub fn modular(spec: &ProblemSpec, v: &GridFunction, alpha: f64) -> f64 {
    modular_of(&spec.grid, &cell_gradient(&spec.grid, v.values()), spec.p, spec.q, alpha)
}

fn modular_of(grid: &RadialGrid, grad: &[f64], p: f64, q: f64, alpha: f64) -> f64 {
    compensated_sum(grid.cell_weights().iter().zip(grad).map(|(w, g)| {
        let t = g.abs() / alpha;
        w * (t.powf(p) / p + t.powf(q) / q)
    }))
}

/// Luxemburg norm `‖v‖_X`: the `α > 0` with `∫Ψ(|∇v|/α) = 1`, by bisection.
pub fn luxemburg_norm(spec: &ProblemSpec, v: &GridFunction) -> Result<f64> {
    spec.check(v)?;
    let grad = cell_gradient(&spec.grid, v.values());
    if grad.iter().all(|&g| g == 0.0) {
        return Ok(0.0);
    }
    let m = |a: f64| modular_of(&spec.grid, &grad, spec.p, spec.q, a);
    // bracket: m is continuous and strictly decreasing in α
    let mut hi = 1.0_f64;
    while m(hi) > 1.0 {
        hi *= 2.0;
    }
    let mut lo = hi;
    while m(lo) < 1.0 {
        lo *= 0.5;
    }
    if m(lo) == 1.0 {
        return Ok(lo);
    }
    while hi - lo > 1e-10 * 0.5 * hi {
        let mid = 0.5 * (lo + hi);
        if m(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `|H(u) + G(u)| / (|H(u)| + G(u))`; zero exactly on the Nehari manifold.
pub fn nehari_residual(spec: &ProblemSpec, u: &GridFunction) -> Result<f64> {
    let r = report(spec, u)?;
    let denom = r.h_value.abs() + r.g_value;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((r.h_value + r.g_value).abs() / denom)
}

/// Largest weak-form residual `|⟨J′_λ(u), φ_j⟩|` over nodal hat functions,
/// relative to the largest flux magnitude entering any node.
pub fn weak_residual(spec: &ProblemSpec, u: &GridFunction) -> Result<f64> {
    spec.check(u)?;
    if u.is_zero() {
        return Ok(0.0);
    }
    let values = u.values();
    let residual = grad_j_values(spec, values)?;
    let terms = Terms::new(&spec.grid, values);
    let grid = &spec.grid;
    let n = values.len();
    let mut scale = vec![0.0; n];
    for i in 0..terms.grad.len() {
        let g = terms.grad[i].abs();
        let w = grid.cell_weights()[i];
        let flux = w * (g.powf(spec.p - 1.0) + g.powf(spec.q - 1.0)) / grid.widths()[i];
        let mass = 0.5 * spec.lambda.abs() * w * spec.weight.samples()[i] * terms.mag[i].powf(spec.p - 1.0);
        scale[i] += flux + mass;
        scale[i + 1] += flux + mass;
    }
    let num = residual[1..n - 1].iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let den = scale[1..n - 1].iter().fold(0.0_f64, |m, s| m.max(*s));
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, sample_weight, Spacing, WeightKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn flat_spec(p: f64, q: f64, lambda: f64, dim: usize) -> ProblemSpec {
        let grid = Arc::new(build_grid(1.0, 2.0, 2, Spacing::Uniform, dim).unwrap());
        // alpha = 0 is rejected by ProblemSpec, so use a table for K ≡ 1
        let weight = sample_weight(
            &grid,
            &WeightKind::CustomTable {
                values: vec![1.0; 2],
            },
            None,
        )
        .unwrap();
        ProblemSpec::new(grid, Arc::new(weight), p, q, lambda, 0.0).unwrap()
    }

    fn spec_on(n_cells: usize, p: f64, q: f64, lambda: f64, eps: f64) -> ProblemSpec {
        let grid = Arc::new(build_grid(1.0, 4.0, n_cells, Spacing::Uniform, 5).unwrap());
        let weight = sample_weight(&grid, &WeightKind::power_decay(1.0, p + 1.0), None).unwrap();
        ProblemSpec::new(grid, Arc::new(weight), p, q, lambda, eps).unwrap()
    }

    /// `spec` with λ set to twice the Rayleigh quotient of `v`, so `v ∈ H_λ⁻`.
    fn above_quotient(spec: ProblemSpec, v: &GridFunction) -> ProblemSpec {
        let quotient = gradient_norm_power(v, spec.p()) / eval_mass(&spec, v).unwrap();
        spec.with_lambda(2.0 * quotient)
    }

    fn hat(spec: &ProblemSpec) -> GridFunction {
        GridFunction::new(spec.grid().clone(), vec![0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn validation() {
        let grid = Arc::new(build_grid(1.0, 2.0, 4, Spacing::Uniform, 3).unwrap());
        let w = Arc::new(sample_weight(&grid, &WeightKind::power_decay(1.0, 3.0), None).unwrap());
        assert!(ProblemSpec::new(grid.clone(), w.clone(), 2.0, 2.0, 1.0, 0.0).is_err());
        assert!(ProblemSpec::new(grid.clone(), w.clone(), 2.0, 3.0, 1.0, 0.0).is_err());
        assert!(ProblemSpec::new(grid.clone(), w.clone(), 0.9, 2.0, 1.0, 0.0).is_err());
        let w_slow = Arc::new(sample_weight(&grid, &WeightKind::power_decay(1.0, 1.5), None).unwrap());
        assert!(ProblemSpec::new(grid.clone(), w_slow, 2.0, 1.5, 1.0, 0.0).is_err());
        assert!(ProblemSpec::new(grid, w, 2.0, 1.5, 1.0, 0.0).is_ok());
    }

    #[test]
    fn hat_values_by_direct_summation() {
        // N = 2 would make p = 2 inadmissible, so use N = 3 and recompute by hand
        let spec = flat_spec(2.0, 2.5, 1.0, 3);
        let w = spec.grid().cell_weights().to_vec();
        let stiffness = w[0] * 4.0 + w[1] * 4.0;
        let mass = w[0] * 0.25 + w[1] * 0.25;
        let v = hat(&spec);
        assert_relative_eq!(eval_h(&spec, &v).unwrap(), stiffness - mass, max_relative = 1e-15);
    }

    #[test]
    fn hat_values_two_dimensional_arithmetic() {
        // the same sums on the N = 2 grid, evaluated through the kernels directly
        let grid = build_grid(1.0, 2.0, 2, Spacing::Uniform, 2).unwrap();
        let terms = Terms::new(&grid, &[0.0, 1.0, 0.0]);
        let n2 = terms.gradient_energy(&grid, 2.0);
        let d = terms.mass(&grid, &[1.0, 1.0], 2.0);
        assert_relative_eq!(n2, 0.625 * 4.0 + 0.875 * 4.0);
        assert_relative_eq!(n2, 6.0);
        assert_relative_eq!(d, 0.375);
        assert_relative_eq!(n2 - d, 5.625);
    }

    #[test]
    fn zero_function() {
        let spec = spec_on(10, 2.0, 4.0, 3.0, 0.0);
        let z = GridFunction::zeros(spec.grid().clone());
        assert_eq!(eval_h(&spec, &z).unwrap(), 0.0);
        assert_eq!(eval_g(&spec, &z).unwrap(), 0.0);
        assert_eq!(eval_j(&spec, &z).unwrap(), 0.0);
        assert!(grad_j(&spec, &z).unwrap().is_zero());
        assert_eq!(luxemburg_norm(&spec, &z).unwrap(), 0.0);
        assert!(!report(&spec, &z).unwrap().in_h_minus);
    }

    #[test]
    fn fiber_scalars() {
        assert_relative_eq!(fiber_scale_from(-1.0, 1.0, 2.0, 4.0).unwrap(), 1.0);
        assert_relative_eq!(fiber_scale_from(-1.0, 1.0, 3.0, 1.5).unwrap(), 1.0);
        assert_relative_eq!(fiber_scale_from(-8.0, 1.0, 2.0, 4.0).unwrap(), 8f64.sqrt());
        assert_relative_eq!(fiber_scale_from(-8.0, 1.0, 4.0, 2.0).unwrap(), 8f64.powf(-0.5));
        assert_relative_eq!(jtilde_from(-2.0, 1.0, 2.0, 4.0).unwrap(), -1.0);
        assert_relative_eq!(jtilde_from(-2.0, 1.0, 4.0, 2.0).unwrap(), 0.125);
        assert!(matches!(
            fiber_scale_from(0.0, 1.0, 2.0, 4.0),
            Err(Error::NotInHMinus { .. })
        ));
        assert!(jtilde_from(1.0, 1.0, 2.0, 4.0).is_err());
    }

    #[test]
    fn reconstruct_is_nonnegative_and_on_nehari() {
        let spec = spec_on(40, 2.0, 4.0, 0.0, 0.0);
        // one-signed but negative: the reconstruction must flip it
        let v = GridFunction::from_fn(spec.grid().clone(), |r| -(std::f64::consts::PI * (r - 1.0) / 3.0).sin());
        let spec = above_quotient(spec, &v);
        assert!(report(&spec, &v).unwrap().in_h_minus);
        let u = reconstruct_solution(&spec, &v).unwrap();
        assert!(u.values().iter().all(|&x| x >= 0.0));
        assert!(nehari_residual(&spec, &u).unwrap() < 1e-12);
        let off = u.scaled(2.0);
        assert!(nehari_residual(&spec, &off).unwrap() > 0.1);
    }

    #[test]
    fn q_norm_of_solution_equals_scale() {
        let spec = spec_on(40, 2.0, 4.0, 400.0, 0.0);
        let v0 = GridFunction::from_fn(spec.grid().clone(), |r| (r - 1.0) * (4.0 - r));
        let v = v0.scaled(eval_g(&spec, &v0).unwrap().powf(-0.25));
        let t = fiber_scale(&spec, &v).unwrap();
        let u = reconstruct_solution(&spec, &v).unwrap();
        assert_relative_eq!(eval_g(&spec, &u).unwrap().powf(0.25), t, max_relative = 1e-13);
    }

    #[test]
    fn nehari_normalisation_lands_in_w_lambda() {
        let spec = spec_on(30, 3.0, 2.0, 0.0, 0.0);
        let v = GridFunction::from_fn(spec.grid().clone(), |r| (r - 1.0) * (4.0 - r) * r);
        let spec = above_quotient(spec, &v);
        let u = reconstruct_solution(&spec, &v).unwrap();
        let qn = eval_g(&spec, &u).unwrap().powf(1.0 / spec.q());
        let w = u.scaled(1.0 / qn);
        let r = report(&spec, &w).unwrap();
        assert!(r.h_value < 0.0);
        assert_relative_eq!(r.g_value, 1.0, max_relative = 1e-13);
    }

    #[test]
    fn degenerate_gradient_is_reported() {
        let spec = spec_on(6, 1.5, 2.5, 1.0, 0.0);
        let v = GridFunction::from_interior(spec.grid().clone(), &[1.0, 2.0, 2.0, 1.0, 0.5]).unwrap();
        assert!(matches!(
            grad_j(&spec, &v),
            Err(Error::DegenerateGradient { cell: 2 })
        ));
        assert!(grad_j(&spec.with_grad_reg_eps(1e-8), &v).is_ok());
    }

    #[test]
    fn euler_identity_for_gradient() {
        let spec = spec_on(25, 2.5, 3.5, 7.0, 0.0);
        let u = GridFunction::from_fn(spec.grid().clone(), |r| (r * 2.0).sin() + 0.3);
        let g = grad_j(&spec, &u).unwrap();
        let lhs = crate::numeric::dot(g.values(), u.values());
        let r = report(&spec, &u).unwrap();
        assert_relative_eq!(lhs, r.h_value + r.g_value, max_relative = 1e-12);
    }

    #[test]
    fn luxemburg_unit_modular() {
        let spec = spec_on(20, 2.0, 3.0, 1.0, 0.0);
        let v0 = GridFunction::from_fn(spec.grid().clone(), |r| (r - 1.0) * (4.0 - r));
        // rescale v0 so that the modular at α = 1 is exactly 1 (up to roundoff)
        let mut lo: f64 = 1e-6;
        let mut hi = 1e6;
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if modular(&spec, &v0.scaled(mid), 1.0) > 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let v = v0.scaled(lo);
        assert_relative_eq!(luxemburg_norm(&spec, &v).unwrap(), 1.0, max_relative = 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn j_splits_into_h_and_g(interior in prop::collection::vec(-3.0..3.0f64, 9), lambda in 0.0..50.0f64) {
            let spec = spec_on(10, 2.0, 4.0, lambda, 0.0);
            let u = GridFunction::from_interior(spec.grid().clone(), &interior).unwrap();
            let r = report(&spec, &u).unwrap();
            let h = eval_h(&spec, &u).unwrap();
            let g = eval_g(&spec, &u).unwrap();
            let j = eval_j(&spec, &u).unwrap();
            let scale = h.abs() / 2.0 + g.abs() / 4.0;
            prop_assert!((j - (h / 2.0 + g / 4.0)).abs() <= 8.0 * f64::EPSILON * scale);
            prop_assert_eq!(r.in_h_minus, h < 0.0 && !u.is_zero());
        }

        #[test]
        fn g_is_q_homogeneous(interior in prop::collection::vec(-3.0..3.0f64, 9), c in -5.0..5.0f64) {
            let spec = spec_on(10, 1.5, 2.5, 1.0, 0.0);
            let v = GridFunction::from_interior(spec.grid().clone(), &interior).unwrap();
            let lhs = eval_g(&spec, &v.scaled(c)).unwrap();
            let rhs = c.abs().powf(2.5) * eval_g(&spec, &v).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn positive_energy_without_lambda(interior in prop::collection::vec(-3.0..3.0f64, 9)) {
            let spec = spec_on(10, 2.0, 4.0, 0.0, 0.0);
            let u = GridFunction::from_interior(spec.grid().clone(), &interior).unwrap();
            prop_assume!(!u.is_zero());
            prop_assert!(eval_h(&spec, &u).unwrap() > 0.0);
            prop_assert!(eval_j(&spec, &u).unwrap() > 0.0);
        }

        #[test]
        fn norm_inequalities(interior in prop::collection::vec(-10.0..10.0f64, 9)) {
            let spec = spec_on(10, 1.5, 3.0, 1.0, 0.0);
            let v = GridFunction::from_interior(spec.grid().clone(), &interior).unwrap();
            prop_assume!(!v.is_zero());
            let x = luxemburg_norm(&spec, &v).unwrap();
            let lp = gradient_norm_power(&v, 1.5).powf(1.0 / 1.5);
            let lq = gradient_norm_power(&v, 3.0).powf(1.0 / 3.0);
            prop_assert!(lp <= 1.5f64.powf(1.0 / 1.5) * x * (1.0 + 1e-10));
            prop_assert!(lq <= 3.0f64.powf(1.0 / 3.0) * x * (1.0 + 1e-10));
        }
    }
}
