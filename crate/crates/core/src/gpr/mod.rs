//! Gaussian process regression over the antenna grid.
//!
//! The real and imaginary parts of the channel are modelled as two
//! independent zero-mean GPs that share one kernel and one set of
//! hyperparameters. Hyperparameters are fitted by maximizing the sum of the
//! two log marginal likelihoods; the noise variance is treated as known.
//! All solves go through a single Cholesky factor of `K + σ² I`.

pub mod blup;
pub mod optimize;

use std::f64::consts::PI;
use std::sync::Arc;

use faer::prelude::SolverCore;
use faer::Side;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::channel_models::ChannelMatrix;
use crate::error::{invalid, Error, Result};
use crate::grid::GridPoint;
use crate::kernels::{Hyper, KernelSpec, JITTER};
use crate::linalg::{CMatrix, C64};
use crate::pilot_probing::ProbingScheme;
use crate::rng::{derive_seed, rng_from_seed};

pub use blup::{blup_oracle, Selector};
pub use optimize::{minimize_bounded, Objective, OptimResult, OptimizerConfig};

/// Jitter escalation steps (each ×10) before a factorization is declared failed.
const JITTER_ATTEMPTS: usize = 7;

/// Negative variances down to `-VARIANCE_SLACK · γ` are clamped to zero.
const VARIANCE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Factor {
    chol: Arc<faer::linalg::solvers::Cholesky<f64>>,
    /// Lower-triangular `L` with `L Lᵀ = K + (σ² + jitter) I`.
    l: DMatrix<f64>,
    jitter: f64,
}

/// Cholesky of `K + σ² I`, escalating a diagonal jitter on failure.
fn factorize(k: DMatrix<f64>, noise_variance: f64, gamma: f64) -> Result<Factor> {
    let n = k.nrows();
    let mut a = faer::Mat::<f64>::from_fn(n, n, |i, j| k[(i, j)]);
    let mut jitter = JITTER * gamma;
    for i in 0..n {
        a.write(i, i, a.read(i, i) + noise_variance + jitter);
    }
    for _ in 0..JITTER_ATTEMPTS {
        if let Ok(chol) = a.cholesky(Side::Lower) {
            let lf = chol.compute_l();
            let l = DMatrix::from_fn(n, n, |i, j| lf.read(i, j));
            if l.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok(Factor {
                    chol: Arc::new(chol),
                    l,
                    jitter,
                });
            }
        }
        for i in 0..n {
            a.write(i, i, a.read(i, i) + 9.0 * jitter);
        }
        jitter *= 10.0;
    }
    Err(Error::IllConditioned { jitter })
}

fn check_noise(noise_variance: f64) -> Result<()> {
    if noise_variance >= 0.0 && noise_variance.is_finite() {
        Ok(())
    } else {
        Err(invalid("noise_variance", "must be finite and nonnegative"))
    }
}

/// `(log p(h), α = (K + σ² I)⁻¹ h)` from a factorization.
fn lml_terms(factor: &Factor, h: &DVector<f64>) -> (f64, DVector<f64>) {
    let l = &factor.l;
    let v = l.solve_lower_triangular(h).expect("Cholesky factor has a nonzero diagonal");
    let quad = v.norm_squared();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let p = h.len() as f64;
    let alpha = l.tr_solve_lower_triangular(&v).expect("Cholesky factor has a nonzero diagonal");
    (-0.5 * quad - 0.5 * log_det - 0.5 * p * (2.0 * PI).ln(), alpha)
}

/// `(K + σ² I)⁻¹` from its Cholesky factor.
fn factor_inverse(factor: &Factor) -> DMatrix<f64> {
    let inv = factor.chol.inverse();
    DMatrix::from_fn(inv.nrows(), inv.ncols(), |i, j| inv.read(i, j))
}

/// `½ Σ_ab (Σ_t α_t α_tᵀ - T W)_ab (∂K)_ab` for each gradient matrix.
fn lml_gradient_terms(w: &DMatrix<f64>, alphas: &[DVector<f64>], grads: &[DMatrix<f64>]) -> Vec<f64> {
    let n = w.nrows();
    let t = alphas.len() as f64;
    let mut a = w * (-t);
    for alpha in alphas {
        a.ger(1.0, alpha, alpha, 1.0);
    }
    grads
        .iter()
        .map(|dk| {
            debug_assert_eq!(dk.nrows(), n);
            0.5 * a.iter().zip(dk.iter()).map(|(x, y)| x * y).sum::<f64>()
        })
        .collect()
}

/// `log p(h | Z, θ) = -½ hᵀ(K+σ²I)⁻¹h - ½ log det(K+σ²I) - (P/2) log 2π`.
pub fn log_marginal_likelihood(
    kernel: &KernelSpec,
    noise_variance: f64,
    points: &[GridPoint],
    h: &DVector<f64>,
) -> Result<f64> {
    check_noise(noise_variance)?;
    check_training(points, h)?;
    let factor = factorize(kernel.gram_sym(points), noise_variance, kernel.gamma())?;
    Ok(lml_terms(&factor, h).0)
}

/// Gradient of [`log_marginal_likelihood`] with respect to the log of each
/// free hyperparameter. The noise variance is not a free parameter.
pub fn lml_gradient(
    kernel: &KernelSpec,
    noise_variance: f64,
    points: &[GridPoint],
    h: &DVector<f64>,
) -> Result<Vec<(Hyper, f64)>> {
    check_noise(noise_variance)?;
    check_training(points, h)?;
    let (k, grads) = kernel.gram_and_gradient(points);
    let factor = factorize(k, noise_variance, kernel.gamma())?;
    let (_, alpha) = lml_terms(&factor, h);
    let w = factor_inverse(&factor);
    let g = lml_gradient_terms(&w, &[alpha], &grads);
    Ok(kernel.free_params().iter().copied().zip(g).collect())
}

fn check_training(points: &[GridPoint], h: &DVector<f64>) -> Result<()> {
    if points.is_empty() {
        return Err(invalid("training set", "needs at least one point"));
    }
    if points.len() != h.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} training points but {} targets",
            points.len(),
            h.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Number of optimizer starts; the first uses the initial kernel.
    pub restarts: usize,
    pub optimizer: OptimizerConfig,
    /// Seed for the log-uniform restart points.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

/// Negative joint log marginal likelihood of the real and imaginary parts.
struct JointObjective<'a> {
    kernel: KernelSpec,
    params: &'a [Hyper],
    noise_variance: f64,
    points: &'a [GridPoint],
    targets: [&'a DVector<f64>; 2],
    cache: Option<(Vec<f64>, Factor, f64, Vec<DVector<f64>>)>,
}

impl JointObjective<'_> {
    fn kernel_at(&self, x: &[f64]) -> KernelSpec {
        self.params
            .iter()
            .zip(x)
            .fold(self.kernel, |k, (&h, &v)| k.with(h, v.exp()))
    }

    fn evaluate(&mut self, x: &[f64]) -> Option<f64> {
        if let Some((cx, _, f, _)) = &self.cache {
            if cx.as_slice() == x {
                return Some(*f);
            }
        }
        let kernel = self.kernel_at(x);
        let factor = factorize(kernel.gram_sym(self.points), self.noise_variance, kernel.gamma()).ok()?;
        let mut total = 0.0;
        let mut alphas = Vec::with_capacity(2);
        for h in self.targets {
            let (v, alpha) = lml_terms(&factor, h);
            total += v;
            alphas.push(alpha);
        }
        let f = -total;
        if !f.is_finite() {
            return None;
        }
        self.cache = Some((x.to_vec(), factor, f, alphas));
        Some(f)
    }
}

impl Objective for JointObjective<'_> {
    fn value(&mut self, x: &[f64]) -> Option<f64> {
        self.evaluate(x)
    }

    fn value_and_gradient(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let f = self.evaluate(x)?;
        let kernel = self.kernel_at(x);
        let (_, grads) = kernel.gram_and_gradient(self.points);
        let (_, factor, _, alphas) = self.cache.as_ref().expect("evaluate fills the cache");
        let w = factor_inverse(factor);
        let all = lml_gradient_terms(&w, alphas, &grads);
        let g = self
            .params
            .iter()
            .map(|h| {
                let idx = kernel.free_params().iter().position(|p| p == h).expect("optimized parameter is free");
                -all[idx]
            })
            .collect::<Vec<f64>>();
        if g.iter().all(|v| v.is_finite()) {
            Some((f, g))
        } else {
            None
        }
    }
}

/// A fitted GP: optimized kernel, training data, and the shared factorization.
#[derive(Debug, Clone)]
pub struct GprModel {
    kernel: KernelSpec,
    noise_variance: f64,
    train_points: Vec<GridPoint>,
    train_re: DVector<f64>,
    train_im: DVector<f64>,
    factor: Factor,
    alpha_re: DVector<f64>,
    alpha_im: DVector<f64>,
    objective: f64,
}

impl GprModel {
    /// Conditions a GP with fixed hyperparameters on the training data.
    pub fn condition(
        kernel: KernelSpec,
        noise_variance: f64,
        points: &[GridPoint],
        h_re: &DVector<f64>,
        h_im: &DVector<f64>,
    ) -> Result<Self> {
        check_noise(noise_variance)?;
        check_training(points, h_re)?;
        check_training(points, h_im)?;
        let factor = factorize(kernel.gram_sym(points), noise_variance, kernel.gamma())?;
        let (lre, alpha_re) = lml_terms(&factor, h_re);
        let (lim, alpha_im) = lml_terms(&factor, h_im);
        Ok(Self {
            kernel,
            noise_variance,
            train_points: points.to_vec(),
            train_re: h_re.clone(),
            train_im: h_im.clone(),
            factor,
            alpha_re,
            alpha_im,
            objective: lre + lim,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn train_points(&self) -> &[GridPoint] {
        &self.train_points
    }

    pub fn train_values_re(&self) -> &DVector<f64> {
        &self.train_re
    }

    pub fn train_values_im(&self) -> &DVector<f64> {
        &self.train_im
    }

    /// Lower-triangular factor `L` with `L Lᵀ = K + (σ² + jitter) I`.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.factor.l.clone()
    }

    /// Diagonal jitter that was needed on top of `σ²`.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    /// Joint log marginal likelihood (real + imaginary) at the fitted kernel.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.objective
    }
}

/// Maximizes the joint real/imaginary log marginal likelihood over the
/// kernel's free log-hyperparameters inside their bounds.
pub fn fit(
    kernel_init: &KernelSpec,
    noise_variance: f64,
    points: &[GridPoint],
    h_re: &DVector<f64>,
    h_im: &DVector<f64>,
    options: &FitOptions,
) -> Result<GprModel> {
    check_noise(noise_variance)?;
    check_training(points, h_re)?;
    check_training(points, h_im)?;
    if options.restarts == 0 {
        return Err(invalid("restarts", "must be at least 1"));
    }
    // A single point carries no distance information: only the scale is identifiable.
    let params: &[Hyper] = if points.len() == 1 {
        &[Hyper::Gamma]
    } else {
        kernel_init.free_params()
    };
    let bounds: Vec<(f64, f64)> = params
        .iter()
        .map(|&h| {
            let (lo, hi) = kernel_init.bounds().get(h);
            (lo.ln(), hi.ln())
        })
        .collect();
    let x_init: Vec<f64> = params
        .iter()
        .zip(&bounds)
        .map(|(&h, &(lo, hi))| kernel_init.get(h).ln().clamp(lo, hi))
        .collect();

    let mut objective = JointObjective {
        kernel: *kernel_init,
        params,
        noise_variance,
        points,
        targets: [h_re, h_im],
        cache: None,
    };
    let mut best: Option<OptimResult> = None;
    for restart in 0..options.restarts {
        let x0 = if restart == 0 {
            x_init.clone()
        } else {
            let mut rng = rng_from_seed(derive_seed(options.seed, restart as u64));
            bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()
        };
        if let Some(res) = minimize_bounded(&mut objective, &x0, &bounds, &options.optimizer) {
            if res.value.is_finite() && best.as_ref().is_none_or(|b| res.value < b.value) {
                best = Some(res);
            }
        }
    }
    let best = best.ok_or(Error::OptimizationFailed {
        restarts: options.restarts,
    })?;
    let kernel = objective.kernel_at(&best.x);
    GprModel::condition(kernel, noise_variance, points, h_re, h_im)
}

/// Posterior means and marginal variances of both parts at the test points.
#[derive(Debug, Clone, PartialEq)]
pub struct GprPosterior {
    pub test_points: Vec<GridPoint>,
    pub mean_re: DVector<f64>,
    pub mean_im: DVector<f64>,
    pub var_re: DVector<f64>,
    pub var_im: DVector<f64>,
}

impl GprPosterior {
    pub fn len(&self) -> usize {
        self.test_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.test_points.is_empty()
    }

    pub fn mean(&self, idx: usize) -> C64 {
        C64::new(self.mean_re[idx], self.mean_im[idx])
    }

    /// Variance of the complex entry, `var_re + var_im` (no Re/Im cross term).
    pub fn complex_variance(&self, idx: usize) -> f64 {
        self.var_re[idx] + self.var_im[idx]
    }
}

/// `μ* = K*ᵀ (K + σ² I)⁻¹ h` and `diag(K** - K*ᵀ (K + σ² I)⁻¹ K*)`.
pub fn predict(model: &GprModel, test_points: &[GridPoint]) -> Result<GprPosterior> {
    let m = test_points.len();
    if m == 0 {
        return Ok(GprPosterior {
            test_points: Vec::new(),
            mean_re: DVector::zeros(0),
            mean_im: DVector::zeros(0),
            var_re: DVector::zeros(0),
            var_im: DVector::zeros(0),
        });
    }
    let k_star = model.kernel.gram(&model.train_points, test_points);
    let mean_re = k_star.tr_mul(&model.alpha_re);
    let mean_im = k_star.tr_mul(&model.alpha_im);
    let v = model
        .factor
        .l
        .solve_lower_triangular(&k_star)
        .expect("Cholesky factor has a nonzero diagonal");
    let tolerance = VARIANCE_SLACK * model.kernel.gamma();
    let mut var = DVector::zeros(m);
    for (j, z) in test_points.iter().enumerate() {
        let prior = model.kernel.eval(*z, *z);
        let explained = v.column(j).norm_squared();
        let raw = prior - explained;
        if raw < -tolerance {
            return Err(Error::NegativeVariance { value: raw, tolerance });
        }
        var[j] = raw.max(0.0);
    }
    Ok(GprPosterior {
        test_points: test_points.to_vec(),
        mean_re,
        mean_im,
        var_im: var.clone(),
        var_re: var,
    })
}

/// Full channel estimate: observed entries keep their (noisy) training
/// values, unobserved entries take the posterior mean `μ_Re + j μ_Im`.
pub fn reconstruct(model: &GprModel, posterior: &GprPosterior, scheme: &ProbingScheme) -> Result<ChannelMatrix> {
    let (nr, nt) = (scheme.n_rx(), scheme.n_tx());
    let mut h = CMatrix::zeros(nr, nt);
    let mut filled = vec![false; nr * nt];
    let mut put = |p: GridPoint, v: C64| -> Result<()> {
        if p.row >= nr || p.col >= nt {
            return Err(Error::DimensionMismatch(format!("{p} is outside the {nr}x{nt} grid")));
        }
        h[(p.row, p.col)] = v;
        filled[p.row + p.col * nr] = true;
        Ok(())
    };
    for (i, &p) in model.train_points.iter().enumerate() {
        put(p, C64::new(model.train_re[i], model.train_im[i]))?;
    }
    for (i, &p) in posterior.test_points.iter().enumerate() {
        put(p, posterior.mean(i))?;
    }
    if let Some(idx) = filled.iter().position(|f| !f) {
        return Err(Error::CoverageGap {
            row: idx % nr,
            col: idx / nr,
        });
    }
    ChannelMatrix::new(h)
}

#[cfg(test)]
mod tests;
