//! Independent cross-checks for small problems.
//!
//! * [`linear_eigen_oracle`]: for `p = 2` the discrete Rayleigh quotient is a
//!   ratio of two symmetric tridiagonal quadratic forms, and its minimum is
//!   the smallest generalised eigenvalue of the pair, found here by bisection
//!   on Sturm counts (inertia of `A - σB`).
//! * [`brute_force_min_jtilde`]: exhaustive search of `J̃_λ` over the unit
//!   sphere of a grid with at most four interior nodes, using hyperspherical
//!   angles. `J̃_λ` is 0-homogeneous and even, so a half-sphere suffices.
//!
//! Cost model: one functional evaluation per sample, `res^{d-1}` samples for
//! `d` interior nodes plus `8 · 5^{d-1}` in the refinement passes. At the
//! default `res = 721` that is about 5·10⁵ evaluations for three nodes.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{jtilde_from, Energies, ProblemSpec, Terms};
use crate::grid::{GridFunction, RadialGrid, WeightField};

pub const DEFAULT_RESOLUTION: usize = 721;
pub const DEFAULT_REFINE_PASSES: usize = 8;

/// Stiffness and weighted-mass tridiagonals of the `p = 2` quadratic forms
/// on the interior nodes: `(diag_a, off_a, diag_b, off_b)`.
pub fn assemble_linear_pair(grid: &RadialGrid, weight: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let w = grid.cell_weights();
    let h = grid.widths();
    let m = grid.n_cells() - 1;
    let a: Vec<f64> = (0..grid.n_cells()).map(|i| w[i] / (h[i] * h[i])).collect();
    let b: Vec<f64> = (0..grid.n_cells()).map(|i| 0.25 * w[i] * weight[i]).collect();
    let diag_a = (1..=m).map(|j| a[j - 1] + a[j]).collect();
    let off_a = (1..m).map(|j| -a[j]).collect();
    let diag_b = (1..=m).map(|j| b[j - 1] + b[j]).collect();
    let off_b = (1..m).map(|j| b[j]).collect();
    (diag_a, off_a, diag_b, off_b)
}

/// Number of eigenvalues of the pencil below `sigma` (negative pivots of
/// `A - σB`).
fn sturm_count(diag_a: &[f64], off_a: &[f64], diag_b: &[f64], off_b: &[f64], sigma: f64) -> usize {
    let mut count = 0;
    let mut pivot = 0.0_f64;
    for j in 0..diag_a.len() {
        let d = diag_a[j] - sigma * diag_b[j];
        pivot = if j == 0 {
            d
        } else {
            let e = off_a[j - 1] - sigma * off_b[j - 1];
            let prev = if pivot == 0.0 { f64::EPSILON * d.abs().max(1.0) } else { pivot };
            d - e * e / prev
        };
        if pivot < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest generalised eigenvalue of the `p = 2` stiffness / weighted-mass pair.
pub fn linear_eigen_oracle(grid: &RadialGrid, weight: &WeightField) -> f64 {
    let (da, oa, db, ob) = assemble_linear_pair(grid, weight.samples());
    let mut lo = 0.0_f64;
    // any Rayleigh quotient bounds λ_min from above
    let mut hi = da.iter().zip(&db).map(|(a, b)| a / b).fold(f64::INFINITY, f64::min);
    while sturm_count(&da, &oa, &db, &ob, hi) == 0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(&da, &oa, &db, &ob, mid) == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A grid small enough for exhaustive search.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub spec: ProblemSpec,
    /// Samples per angle on the coarse pass.
    pub resolution: usize,
    pub refine_passes: usize,
}

impl TinyInstance {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        let d = spec.grid().n_nodes() - 2;
        if d == 0 || d > 4 {
            return Err(Error::InvalidGeometry(format!(
                "tiny instances need 1 to 4 interior nodes, got {d}"
            )));
        }
        let resolution = if d <= 3 { DEFAULT_RESOLUTION } else { 181 };
        Ok(Self {
            spec,
            resolution,
            refine_passes: DEFAULT_REFINE_PASSES,
        })
    }

    pub fn interior_dim(&self) -> usize {
        self.spec.grid().n_nodes() - 2
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BruteForceResult {
    /// Minimum after refinement.
    pub m_bf: f64,
    /// Minimum on the coarse angular grid.
    pub m_coarse: f64,
    #[serde(skip)]
    pub v_bf: GridFunction,
    pub evaluations: usize,
}

/// Unit vector from `d-1` hyperspherical angles.
fn sphere_point(angles: &[f64], out: &mut [f64]) {
    let d = out.len();
    let mut s = 1.0;
    for k in 0..d - 1 {
        out[k] = s * angles[k].cos();
        s *= angles[k].sin();
    }
    out[d - 1] = s;
}

fn nodal(interior: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(interior.len() + 2);
    v.push(0.0);
    v.extend_from_slice(interior);
    v.push(0.0);
    v
}

/// Generic sphere search: minimises `f` over the half-sphere in `d`
/// dimensions. Returns `(coarse_min, refined_min, argmin, evaluations)`.
fn sphere_search<F>(d: usize, resolution: usize, passes: usize, f: F) -> Option<(f64, f64, Vec<f64>, usize)>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    let pi = std::f64::consts::PI;
    if d == 1 {
        let v = f(&[1.0])?;
        return Some((v, v, vec![1.0], 1));
    }
    let k = d - 1;
    let res = resolution.max(2);
    let step = pi / (res - 1) as f64;
    let total = res.pow(k as u32);
    let eval_angles = |angles: &[f64]| -> Option<f64> {
        let mut x = vec![0.0; d];
        sphere_point(angles, &mut x);
        f(&x)
    };
    // deterministic reduction: smallest value, ties to the smallest linear index
    let best = (0..total)
        .into_par_iter()
        .filter_map(|idx| {
            let mut rem = idx;
            let mut angles = vec![0.0; k];
            for a in angles.iter_mut().rev() {
                *a = (rem % res) as f64 * step;
                rem /= res;
            }
            eval_angles(&angles).map(|v| (v, idx, angles))
        })
        .reduce_with(|a, b| {
            if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        })?;
    let coarse = best.0;
    let mut incumbent = best.2;
    let mut value = best.0;
    let mut evaluations = total;
    let mut h = step;
    let offsets = 5usize.pow(k as u32);
    for _ in 0..passes {
        h *= 0.5;
        let center = incumbent.clone();
        for o in 0..offsets {
            let mut rem = o;
            let mut angles = center.clone();
            for a in angles.iter_mut() {
                *a += ((rem % 5) as f64 - 2.0) * h;
                rem /= 5;
            }
            evaluations += 1;
            if let Some(v) = eval_angles(&angles) {
                if v < value {
                    value = v;
                    incumbent = angles;
                }
            }
        }
    }
    let mut x = vec![0.0; d];
    sphere_point(&incumbent, &mut x);
    Some((coarse, value, x, evaluations))
}

/// Brute-force minimum of `J̃_λ` over `W_λ`.
pub fn brute_force_min_jtilde(inst: &TinyInstance) -> Result<BruteForceResult> {
    let spec = &inst.spec;
    let d = inst.interior_dim();
    let (p, q) = (spec.p(), spec.q());
    let lambda = spec.lambda();
    let f = |x: &[f64]| -> Option<f64> {
        let (e, _) = Energies::of(spec, &nodal(x));
        jtilde_from(e.h(lambda), e.n_q, p, q).ok()
    };
    let (coarse, m_bf, x, evaluations) =
        sphere_search(d, inst.resolution, inst.refine_passes, f).ok_or(Error::EmptyFeasibleSet)?;
    let mut values: Vec<f64> = nodal(&x).iter().map(|v| v.abs()).collect();
    let g = Terms::new(spec.grid(), &values).gradient_energy(spec.grid(), q);
    values.iter_mut().for_each(|v| *v *= g.powf(-1.0 / q));
    Ok(BruteForceResult {
        m_bf,
        m_coarse: coarse,
        v_bf: GridFunction::with_values_unchecked(Arc::clone(spec.grid()), values),
        evaluations,
    })
}

/// Brute-force `λ₁` on a tiny grid: minimum of `N_p/D` over the sphere.
pub fn brute_force_lambda1(inst: &TinyInstance) -> f64 {
    let spec = &inst.spec;
    let p = spec.p();
    let k = spec.weight().samples();
    let grid = spec.grid();
    let f = |x: &[f64]| -> Option<f64> {
        let t = Terms::new(grid, &nodal(x));
        let den = t.mass(grid, k, p);
        (den > 0.0).then(|| t.gradient_energy(grid, p) / den)
    };
    sphere_search(inst.interior_dim(), inst.resolution, inst.refine_passes, f)
        .map(|r| r.1)
        .unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::eval_jtilde;
    use crate::grid::{build_grid, sample_weight, Spacing, WeightKind};
    use approx::assert_relative_eq;

    fn flat(grid: &RadialGrid) -> WeightField {
        sample_weight(
            grid,
            &WeightKind::CustomTable {
                values: vec![1.0; grid.n_cells()],
            },
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_interior_node_by_hand() {
        // stiffness 6, mass 0.375 on the two-cell N = 2 grid
        let grid = build_grid(1.0, 2.0, 2, Spacing::Uniform, 2).unwrap();
        let l = linear_eigen_oracle(&grid, &flat(&grid));
        assert_relative_eq!(l, 16.0, max_relative = 1e-13);
    }

    #[test]
    fn matches_dense_three_by_three() {
        // 4 cells, 3 interior nodes: compare against the characteristic
        // polynomial root found by scanning det(A - σB)
        let grid = build_grid(1.0, 2.0, 4, Spacing::Uniform, 3).unwrap();
        let w = flat(&grid);
        let (da, oa, db, ob) = assemble_linear_pair(&grid, w.samples());
        let det = |s: f64| {
            let m = |i: usize, j: usize| -> f64 {
                if i == j {
                    da[i] - s * db[i]
                } else if i + 1 == j || j + 1 == i {
                    let k = i.min(j);
                    oa[k] - s * ob[k]
                } else {
                    0.0
                }
            };
            m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
        };
        let l = linear_eigen_oracle(&grid, &w);
        // sign change of det across the computed root, none below it
        assert!(det(l * (1.0 - 1e-9)) * det(l * (1.0 + 1e-9)) < 0.0);
        let mut s = 0.0;
        while s < l * (1.0 - 1e-6) {
            assert!(det(s) > 0.0);
            s += l / 1000.0;
        }
    }

    #[test]
    fn weight_scaling_inverts_eigenvalue() {
        let grid = build_grid(1.0, 5.0, 30, Spacing::Uniform, 3).unwrap();
        let w = sample_weight(&grid, &WeightKind::power_decay(1.0, 3.0), None).unwrap();
        let base = linear_eigen_oracle(&grid, &w);
        assert_relative_eq!(linear_eigen_oracle(&grid, &w.scaled(4.0)), base / 4.0, max_relative = 1e-12);
    }

    fn tiny(p: f64, q: f64, n_cells: usize) -> ProblemSpec {
        let grid = Arc::new(build_grid(1.0, 3.0, n_cells, Spacing::Uniform, 5).unwrap());
        let w = Arc::new(sample_weight(&grid, &WeightKind::power_decay(1.0, p + 1.0), None).unwrap());
        ProblemSpec::new(grid, w, p, q, 0.0, 1e-8).unwrap()
    }

    #[test]
    fn one_node_sphere_is_exact() {
        let base = tiny(2.0, 4.0, 2);
        let probe = TinyInstance::new(base.clone()).unwrap();
        let l1 = brute_force_lambda1(&probe);
        let spec = base.with_lambda(3.0 * l1);
        let inst = TinyInstance::new(spec.clone()).unwrap();
        let bf = brute_force_min_jtilde(&inst).unwrap();
        let v = GridFunction::from_interior(spec.grid().clone(), &[1.0]).unwrap();
        assert_eq!(bf.m_bf, eval_jtilde(&spec, &v).unwrap());
    }

    #[test]
    fn below_lambda1_feasible_set_is_empty() {
        let base = tiny(2.0, 4.0, 4);
        let mut probe = TinyInstance::new(base.clone()).unwrap();
        probe.resolution = 91;
        let l1 = brute_force_lambda1(&probe);
        let mut inst = TinyInstance::new(base.with_lambda(0.5 * l1)).unwrap();
        inst.resolution = 91;
        assert!(matches!(brute_force_min_jtilde(&inst), Err(Error::EmptyFeasibleSet)));
    }

    #[test]
    fn refinement_does_not_worsen() {
        let base = tiny(3.0, 2.0, 4);
        let mut probe = TinyInstance::new(base.clone()).unwrap();
        probe.resolution = 91;
        let l1 = brute_force_lambda1(&probe);
        let mut inst = TinyInstance::new(base.with_lambda(2.0 * l1)).unwrap();
        inst.resolution = 91;
        let bf = brute_force_min_jtilde(&inst).unwrap();
        assert!(bf.m_bf <= bf.m_coarse);
    }
}
