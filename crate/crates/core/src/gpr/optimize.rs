//! Box-constrained quasi-Newton minimization for low-dimensional problems.
//!
//! A projected BFGS method: the inverse-Hessian approximation is applied to
//! the free variables only, trial points are projected back onto the box, and
//! an Armijo backtracking search runs along the projected path. Intended for
//! the two or three log-hyperparameters of a stationary kernel.

/// A smooth objective to be minimized.
pub trait Objective {
    /// Objective value, or `None` if it cannot be evaluated at `x`.
    fn value(&mut self, x: &[f64]) -> Option<f64>;

    /// Objective value and gradient.
    fn value_and_gradient(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stop once the projected gradient's infinity norm falls below this.
    pub grad_tol: f64,
    /// Stop once the relative decrease of the objective falls below this.
    pub f_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-6,
            f_tol: 2.220446049250313e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// Largest first step, in units of the search space.
const FIRST_STEP: f64 = 1.0;

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Gradient with components that push against an active bound zeroed.
fn projected_gradient(x: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), &(lo, hi))| {
            if (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective` over the box `bounds` starting from `x0`.
///
/// Returns `None` if the objective cannot be evaluated at the (projected)
/// starting point.
pub fn minimize_bounded(
    objective: &mut dyn Objective,
    x0: &[f64],
    bounds: &[(f64, f64)],
    config: &OptimizerConfig,
) -> Option<OptimResult> {
    let n = x0.len();
    assert_eq!(bounds.len(), n, "one bound pair per coordinate");
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let (mut f, mut g) = objective.value_and_gradient(&x)?;
    if !f.is_finite() {
        return None;
    }
    let mut hinv = identity(n);
    let mut first = true;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let pg = projected_gradient(&x, &g, bounds);
        if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) < config.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let free: Vec<bool> = pg.iter().map(|v| *v != 0.0).collect();
        let mut d = vec![0.0; n];
        for i in 0..n {
            if free[i] {
                d[i] = -(0..n).filter(|&j| free[j]).map(|j| hinv[i][j] * g[j]).sum::<f64>();
            }
        }
        if dot(&d, &pg) >= 0.0 {
            hinv = identity(n);
            first = true;
            d = pg.iter().map(|v| -v).collect();
        }
        if first {
            let norm = dot(&d, &d).sqrt();
            if norm > FIRST_STEP {
                d.iter_mut().for_each(|v| *v *= FIRST_STEP / norm);
            }
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            project(&mut xt, bounds);
            let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|s| *s == 0.0) {
                break;
            }
            if let Some(ft) = objective.value(&xt) {
                if ft.is_finite() && ft <= f + ARMIJO_C * dot(&g, &step) {
                    accepted = Some(xt);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(xt) = accepted else {
            // No descent along the projected path: x is stationary to working precision.
            converged = true;
            break;
        };
        let Some((ft, gt)) = objective.value_and_gradient(&xt) else {
            break;
        };
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first {
                let scale = sy / dot(&y, &y);
                hinv = identity(n);
                hinv.iter_mut().enumerate().for_each(|(i, row)| row[i] = scale);
            }
            bfgs_update(&mut hinv, &s, &y, sy);
            first = false;
        }
        let decrease = f - ft;
        x = xt;
        f = ft;
        g = gt;
        if decrease <= config.f_tol * f.abs().max(ft.abs()).max(1.0) {
            converged = true;
            break;
        }
    }
    Some(OptimResult {
        x,
        value: f,
        iterations,
        converged,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`, `ρ = 1 / sᵀy`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
