//! Radial discretisation of the exterior domain.
//!
//! The shell `r_inner < r < r_outer` is split into cells; every cell carries a
//! midpoint `r̄_i`, a width `Δr_i` and the quadrature weight
//! `w_i = r̄_i^{N-1} Δr_i`. The angular measure of the unit sphere is dropped
//! (set to one): it multiplies every integral by the same constant.
//!
//! Nodal functions vanish at both ends: `u = 0` on the inner sphere and the
//! decay condition at infinity is imposed as a Dirichlet zero at `r_outer`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// Cell widths grow by `ratio` from one cell to the next.
    Geometric { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    r_inner: f64,
    r_outer: f64,
    spacing: Spacing,
    dim_n: usize,
    nodes: Vec<f64>,
    midpoints: Vec<f64>,
    widths: Vec<f64>,
    cell_weights: Vec<f64>,
}

/// Builds the grid; shorthand for [`RadialGrid::new`].
pub fn build_grid(
    r_inner: f64,
    r_outer: f64,
    n_cells: usize,
    spacing: Spacing,
    dim_n: usize,
) -> Result<RadialGrid> {
    RadialGrid::new(r_inner, r_outer, n_cells, spacing, dim_n)
}

impl RadialGrid {
    pub fn new(
        r_inner: f64,
        r_outer: f64,
        n_cells: usize,
        spacing: Spacing,
        dim_n: usize,
    ) -> Result<Self> {
        if !(r_inner > 0.0 && r_inner.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "r_inner must be positive and finite, got {r_inner}"
            )));
        }
        if !(r_outer > r_inner && r_outer.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "r_outer ({r_outer}) must exceed r_inner ({r_inner})"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidGeometry(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        if dim_n < 2 {
            return Err(Error::InvalidGeometry(format!(
                "dimension must be at least 2, got {dim_n}"
            )));
        }

        let length = r_outer - r_inner;
        let mut nodes = Vec::with_capacity(n_cells + 1);
        match spacing {
            Spacing::Uniform => {
                let h = length / n_cells as f64;
                nodes.extend((0..=n_cells).map(|i| r_inner + h * i as f64));
            }
            Spacing::Geometric { ratio } => {
                if !(ratio > 0.0 && ratio.is_finite()) {
                    return Err(Error::InvalidGeometry(format!(
                        "geometric ratio must be positive, got {ratio}"
                    )));
                }
                // widths h0 * ratio^i summing to `length`
                let total: f64 = (0..n_cells).map(|i| ratio.powi(i as i32)).sum();
                let h0 = length / total;
                let mut r = r_inner;
                nodes.push(r);
                for i in 0..n_cells {
                    r += h0 * ratio.powi(i as i32);
                    nodes.push(r);
                }
            }
        }
        // pin the end point exactly
        nodes[0] = r_inner;
        nodes[n_cells] = r_outer;
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGeometry(
                "nodes are not strictly increasing (cells too small for f64)".into(),
            ));
        }

        let widths: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let midpoints: Vec<f64> = nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let exponent = (dim_n - 1) as i32;
        let cell_weights: Vec<f64> = midpoints
            .iter()
            .zip(&widths)
            .map(|(m, h)| m.powi(exponent) * h)
            .collect();

        Ok(Self {
            r_inner,
            r_outer,
            spacing,
            dim_n,
            nodes,
            midpoints,
            widths,
            cell_weights,
        })
    }

    pub fn r_inner(&self) -> f64 {
        self.r_inner
    }

    pub fn r_outer(&self) -> f64 {
        self.r_outer
    }

    pub fn n_cells(&self) -> usize {
        self.widths.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn cell_weights(&self) -> &[f64] {
        &self.cell_weights
    }

    /// Σ w_i f_i.
    pub fn integrate_cells(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cells(),
                found: f.len(),
            });
        }
        Ok(compensated_sum(
            self.cell_weights.iter().zip(f).map(|(w, v)| w * v),
        ))
    }

    /// Midpoint-rule value of ∫ r^{N-1} dr over the shell.
    pub fn measure(&self) -> f64 {
        compensated_sum(self.cell_weights.iter().copied())
    }

    /// Same geometry with a different number of cells.
    pub fn with_cells(&self, n_cells: usize) -> Result<Self> {
        Self::new(self.r_inner, self.r_outer, n_cells, self.spacing, self.dim_n)
    }
}

/// Free-function form of [`RadialGrid::integrate_cells`].
pub fn integrate_cells(grid: &RadialGrid, f: &[f64]) -> Result<f64> {
    grid.integrate_cells(f)
}

/// Nodal values `v_0..v_n` on a grid with zero boundary trace.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_nodes(),
                found: values.len(),
            });
        }
        let last = values.len() - 1;
        for index in [0, last] {
            if values[index] != 0.0 {
                return Err(Error::NonzeroTrace {
                    index,
                    value: values[index],
                });
            }
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.n_nodes();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Builds a function from its interior values `v_1..v_{n-1}`.
    pub fn from_interior(grid: Arc<RadialGrid>, interior: &[f64]) -> Result<Self> {
        let expected = grid.n_nodes() - 2;
        if interior.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: interior.len(),
            });
        }
        let mut values = Vec::with_capacity(grid.n_nodes());
        values.push(0.0);
        values.extend_from_slice(interior);
        values.push(0.0);
        Ok(Self { grid, values })
    }

    /// Samples `f` at the interior nodes.
    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let n = grid.n_nodes();
        let values = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &r)| if i == 0 || i == n - 1 { 0.0 } else { f(r) })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.values.len() - 1]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn abs(&self) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| v.abs()).collect(),
        }
    }

    /// Replaces interior values; boundary entries stay zero.
    pub(crate) fn with_values_unchecked(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_nodes());
        debug_assert!(values[0] == 0.0 && values[values.len() - 1] == 0.0);
        Self { grid, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// `g_i = (v_{i+1} - v_i) / Δr_i` per cell.
pub fn discrete_gradient(v: &GridFunction) -> Vec<f64> {
    cell_gradient(v.grid(), v.values())
}

pub(crate) fn cell_gradient(grid: &RadialGrid, values: &[f64]) -> Vec<f64> {
    values
        .windows(2)
        .zip(grid.widths())
        .map(|(w, h)| (w[1] - w[0]) / h)
        .collect()
}

/// Cell-midpoint magnitude `(|v_i| + |v_{i+1}|) / 2`.
pub(crate) fn cell_magnitude(values: &[f64]) -> Vec<f64> {
    values
        .windows(2)
        .map(|w| 0.5 * (w[0].abs() + w[1].abs()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    /// `K(r) = kappa (1 + r)^{-alpha}`.
    PowerDecay { kappa: f64, alpha: f64 },
    /// One positive value per cell midpoint.
    CustomTable { values: Vec<f64> },
}

impl WeightKind {
    pub fn power_decay(kappa: f64, alpha: f64) -> Self {
        WeightKind::PowerDecay { kappa, alpha }
    }

    pub fn eval(&self, r: f64) -> Option<f64> {
        match *self {
            WeightKind::PowerDecay { kappa, alpha } => Some(kappa * (1.0 + r).powf(-alpha)),
            WeightKind::CustomTable { .. } => None,
        }
    }
}

/// Doubling test standing in for `K ∈ L^{N/p}` on the unbounded domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrabilityCheck {
    /// `N/p`.
    pub exponent: f64,
    /// Largest accepted relative change of `Σ w_i K^{N/p}` when `r_outer` doubles.
    pub tolerance: f64,
}

impl IntegrabilityCheck {
    pub const DEFAULT_TOLERANCE: f64 = 0.1;

    pub fn for_exponent(p: f64, dim_n: usize) -> Self {
        Self {
            exponent: dim_n as f64 / p,
            tolerance: Self::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    kind: WeightKind,
    kappa: f64,
    samples: Vec<f64>,
    integrability_change: Option<f64>,
}

/// Samples `K` at cell midpoints and checks positivity, boundedness and the
/// doubling proxy for `L^{N/p}` integrability.
pub fn sample_weight(
    grid: &RadialGrid,
    kind: &WeightKind,
    check: Option<IntegrabilityCheck>,
) -> Result<WeightField> {
    let (samples, kappa) = match kind {
        WeightKind::PowerDecay { kappa, alpha } => {
            if !(*kappa > 0.0 && kappa.is_finite()) {
                return Err(Error::InvalidWeight(format!(
                    "kappa must be positive, got {kappa}"
                )));
            }
            if !(*alpha >= 0.0 && alpha.is_finite()) {
                return Err(Error::InvalidWeight(format!(
                    "alpha must be non-negative, got {alpha}"
                )));
            }
            let samples: Vec<f64> = grid
                .midpoints()
                .iter()
                .map(|&r| kappa * (1.0 + r).powf(-alpha))
                .collect();
            (samples, *kappa)
        }
        WeightKind::CustomTable { values } => {
            if values.len() != grid.n_cells() {
                return Err(Error::DimensionMismatch {
                    expected: grid.n_cells(),
                    found: values.len(),
                });
            }
            let kappa = values.iter().fold(0.0_f64, |m, &k| m.max(k));
            (values.clone(), kappa)
        }
    };

    if let Some((i, k)) = samples
        .iter()
        .enumerate()
        .find(|(_, &k)| !(k > 0.0 && k.is_finite()))
    {
        return Err(Error::InvalidWeight(format!(
            "weight must be strictly positive, sample {i} is {k}"
        )));
    }
    if samples.iter().any(|&k| k > kappa) {
        return Err(Error::InvalidWeight("weight exceeds its amplitude".into()));
    }

    let integrability_change = match (check, kind) {
        (Some(check), WeightKind::PowerDecay { .. }) => {
            let change = doubling_change(grid, kind, check.exponent);
            if !(change <= check.tolerance) {
                return Err(Error::NonIntegrableWeight {
                    exponent: check.exponent,
                    relative_change: change,
                    tolerance: check.tolerance,
                });
            }
            Some(change)
        }
        // a table carries no information beyond r_outer
        _ => None,
    };

    Ok(WeightField {
        kind: kind.clone(),
        kappa,
        samples,
        integrability_change,
    })
}

/// Relative growth of `Σ w_i K(r̄_i)^s` when the shell is extended from
/// `r_outer` to `2 r_outer`, the extension using `n_cells` uniform cells.
fn doubling_change(grid: &RadialGrid, kind: &WeightKind, exponent: f64) -> f64 {
    let base = compensated_sum(
        grid.cell_weights()
            .iter()
            .zip(grid.midpoints())
            .map(|(w, &r)| w * kind.eval(r).unwrap_or(0.0).powf(exponent)),
    );
    let n = grid.n_cells();
    let a = grid.r_outer();
    let h = a / n as f64;
    let dim = (grid.dim_n() - 1) as i32;
    let tail = compensated_sum((0..n).map(|i| {
        let r = a + h * (i as f64 + 0.5);
        r.powi(dim) * h * kind.eval(r).unwrap_or(0.0).powf(exponent)
    }));
    tail / base
}

impl WeightField {
    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Decay exponent for power-law weights.
    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            WeightKind::PowerDecay { alpha, .. } => Some(alpha),
            WeightKind::CustomTable { .. } => None,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Relative change recorded by the doubling check, when it ran.
    pub fn integrability_change(&self) -> Option<f64> {
        self.integrability_change
    }

    /// The same weight multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let kind = match &self.kind {
            WeightKind::PowerDecay { kappa, alpha } => WeightKind::PowerDecay {
                kappa: kappa * c,
                alpha: *alpha,
            },
            WeightKind::CustomTable { values } => WeightKind::CustomTable {
                values: values.iter().map(|k| k * c).collect(),
            },
        };
        Self {
            kind,
            kappa: self.kappa * c,
            samples: self.samples.iter().map(|k| k * c).collect(),
            integrability_change: self.integrability_change,
        }
    }
}
