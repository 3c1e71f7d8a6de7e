//! Small numerical kernels shared by the solvers.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves a symmetric tridiagonal system with the Thomas algorithm.
///
/// `diag` has length n, `off` has length n-1 (the sub/super diagonal).
/// Returns `None` when a pivot vanishes or turns non-positive, which for the
/// SPD stiffness matrices used here signals a broken assembly.
pub fn solve_spd_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    assert_eq!(rhs.len(), n);
    assert_eq!(off.len() + 1, n.max(1));
    if n == 0 {
        return Some(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if !(pivot > 0.0) {
        return None;
    }
    c[0] = if n > 1 { off[0] / pivot } else { 0.0 };
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - off[i - 1] * c[i - 1];
        if !(pivot > 0.0) || !pivot.is_finite() {
            return None;
        }
        c[i] = if i + 1 < n { off[i] / pivot } else { 0.0 };
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Some(x)
}

/// Solves `S x = rhs` on the interior nodes for the Dirichlet stiffness
/// matrix `S = Σ_i c_i/Δr_i² (e_{i+1} - e_i)(e_{i+1} - e_i)ᵀ`.
///
/// `coeff` holds one non-negative coefficient per cell, `rhs` and the result
/// are full nodal vectors whose boundary entries are zero.
pub fn solve_stiffness(widths: &[f64], coeff: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n_cells = widths.len();
    assert_eq!(coeff.len(), n_cells);
    assert_eq!(rhs.len(), n_cells + 1);
    let k: Vec<f64> = coeff.iter().zip(widths).map(|(c, h)| c / (h * h)).collect();
    let m = n_cells - 1;
    let diag: Vec<f64> = (1..=m).map(|j| k[j - 1] + k[j]).collect();
    let off: Vec<f64> = (1..m).map(|j| -k[j]).collect();
    let x = solve_spd_tridiagonal(&diag, &off, &rhs[1..=m])?;
    let mut out = Vec::with_capacity(n_cells + 1);
    out.push(0.0);
    out.extend(x);
    out.push(0.0);
    Some(out)
}
