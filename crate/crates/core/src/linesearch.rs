//! Armijo backtracking with a feasibility oracle.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Armijo {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Step contraction factor in (0, 1).
    pub shrink: f64,
    /// Steps below this are treated as failure.
    pub min_step: f64,
}

impl Default for Armijo {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            shrink: 0.5,
            min_step: 1e-16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub alpha: f64,
    pub value: f64,
    pub trials: usize,
}

impl Armijo {
    /// Backtracks from `alpha0` until `f(α) ≤ f0 + c1 α slope`.
    ///
    /// `eval` returns `None` for infeasible trial points, which are rejected
    /// like a failed decrease test. `slope` must be negative.
    pub fn search<F>(&self, f0: f64, slope: f64, alpha0: f64, mut eval: F) -> Option<Step>
    where
        F: FnMut(f64) -> Option<f64>,
    {
        if !(slope < 0.0) {
            return None;
        }
        let mut alpha = alpha0;
        let mut trials = 0;
        while alpha >= self.min_step {
            trials += 1;
            if let Some(value) = eval(alpha) {
                if value.is_finite() && value <= f0 + self.c1 * alpha * slope {
                    return Some(Step {
                        alpha,
                        value,
                        trials,
                    });
                }
            }
            alpha *= self.shrink;
        }
        None
    }
}
