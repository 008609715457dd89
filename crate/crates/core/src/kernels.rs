//! Stationary covariance functions on the antenna grid.
//!
//! All kernels depend on the Euclidean distance `r = ‖z - z'‖` between two
//! integer grid coordinates. Hyperparameter gradients are returned with
//! respect to the log-parameters, `∂K/∂log θ = θ ∂K/∂θ`.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::grid::GridPoint;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Relative diagonal jitter added to training Gram matrices.
pub const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KernelFamily {
    Rbf,
    /// Matérn with smoothness fixed at 3/2.
    Matern,
    RationalQuadratic,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [KernelFamily::Rbf, KernelFamily::Matern, KernelFamily::RationalQuadratic];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Rbf => "rbf",
            KernelFamily::Matern => "matern",
            KernelFamily::RationalQuadratic => "rq",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rbf" => Ok(KernelFamily::Rbf),
            "matern" | "mat" => Ok(KernelFamily::Matern),
            "rq" | "rational_quadratic" => Ok(KernelFamily::RationalQuadratic),
            other => Err(invalid("kernel", format!("unknown kernel family `{other}`"))),
        }
    }
}

/// A tunable hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hyper {
    Gamma,
    Lengthscale,
    Alpha,
}

impl Hyper {
    pub fn name(self) -> &'static str {
        match self {
            Hyper::Gamma => "gamma",
            Hyper::Lengthscale => "lengthscale",
            Hyper::Alpha => "alpha",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBounds {
    pub gamma: (f64, f64),
    pub lengthscale: (f64, f64),
    pub alpha: (f64, f64),
}

impl KernelBounds {
    /// Default search box for `family`.
    pub fn table(family: KernelFamily) -> Self {
        let lengthscale = match family {
            KernelFamily::RationalQuadratic => (1e-2, 5.0),
            _ => (1e-2, 10.0),
        };
        Self {
            gamma: (1e-2, 1e2),
            lengthscale,
            alpha: (1e-1, 5.0),
        }
    }

    /// Only positivity is enforced.
    pub fn positive() -> Self {
        let any = (f64::MIN_POSITIVE, f64::INFINITY);
        Self {
            gamma: any,
            lengthscale: any,
            alpha: any,
        }
    }

    pub fn get(&self, h: Hyper) -> (f64, f64) {
        match h {
            Hyper::Gamma => self.gamma,
            Hyper::Lengthscale => self.lengthscale,
            Hyper::Alpha => self.alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    gamma: f64,
    lengthscale: f64,
    alpha: f64,
    bounds: KernelBounds,
}

impl KernelSpec {
    pub const MATERN_NU: f64 = 1.5;

    pub fn new(
        family: KernelFamily,
        gamma: f64,
        lengthscale: f64,
        alpha: f64,
        bounds: KernelBounds,
    ) -> Result<Self> {
        let spec = Self {
            family,
            gamma,
            lengthscale,
            alpha,
            bounds,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Initial values `γ = 1`, `ℓ = 0.5`, `α = 0.5` inside the default box.
    pub fn with_defaults(family: KernelFamily) -> Self {
        Self {
            family,
            gamma: 1.0,
            lengthscale: 0.5,
            alpha: 0.5,
            bounds: KernelBounds::table(family),
        }
    }

    fn validate(&self) -> Result<()> {
        for (h, v) in [
            (Hyper::Gamma, self.gamma),
            (Hyper::Lengthscale, self.lengthscale),
            (Hyper::Alpha, self.alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(h.name(), format!("{v} must be positive and finite")));
            }
            let (lo, hi) = self.bounds.get(h);
            if !(lo > 0.0 && lo <= hi) {
                return Err(invalid(h.name(), format!("bad bounds [{lo}, {hi}]")));
            }
            if self.is_free(h) && !(lo..=hi).contains(&v) {
                return Err(invalid(h.name(), format!("{v} outside bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn bounds(&self) -> &KernelBounds {
        &self.bounds
    }

    pub fn get(&self, h: Hyper) -> f64 {
        match h {
            Hyper::Gamma => self.gamma,
            Hyper::Lengthscale => self.lengthscale,
            Hyper::Alpha => self.alpha,
        }
    }

    /// Hyperparameters the kernel depends on (and the optimizer tunes).
    pub fn free_params(&self) -> &'static [Hyper] {
        match self.family {
            KernelFamily::RationalQuadratic => &[Hyper::Gamma, Hyper::Lengthscale, Hyper::Alpha],
            _ => &[Hyper::Gamma, Hyper::Lengthscale],
        }
    }

    pub fn is_free(&self, h: Hyper) -> bool {
        self.free_params().contains(&h)
    }

    /// Copy with one hyperparameter replaced; no bounds check.
    pub fn with(&self, h: Hyper, value: f64) -> Self {
        let mut s = *self;
        match h {
            Hyper::Gamma => s.gamma = value,
            Hyper::Lengthscale => s.lengthscale = value,
            Hyper::Alpha => s.alpha = value,
        }
        s
    }

    /// Kernel value at squared distance `r2`.
    #[inline]
    pub fn eval_sq_dist(&self, r2: f64) -> f64 {
        let l2 = self.lengthscale * self.lengthscale;
        match self.family {
            KernelFamily::Rbf => self.gamma * (-0.5 * r2 / l2).exp(),
            KernelFamily::RationalQuadratic => {
                self.gamma * (1.0 + r2 / (2.0 * self.alpha * l2)).powf(-self.alpha)
            }
            KernelFamily::Matern => {
                let s = SQRT3 * r2.sqrt() / self.lengthscale;
                self.gamma * (1.0 + s) * (-s).exp()
            }
        }
    }

    pub fn eval(&self, z: GridPoint, z_prime: GridPoint) -> f64 {
        self.eval_sq_dist(z.dist_sq(z_prime))
    }

    /// Log-parameter derivatives at squared distance `r2`, in `free_params` order.
    fn grad_sq_dist(&self, r2: f64, out: &mut [f64]) {
        let l2 = self.lengthscale * self.lengthscale;
        match self.family {
            KernelFamily::Rbf => {
                let k = self.gamma * (-0.5 * r2 / l2).exp();
                out[0] = k;
                out[1] = k * r2 / l2;
            }
            KernelFamily::RationalQuadratic => {
                let u = r2 / (2.0 * self.alpha * l2);
                let base = 1.0 + u;
                let k = self.gamma * base.powf(-self.alpha);
                out[0] = k;
                out[1] = k * (r2 / l2) / base;
                out[2] = k * self.alpha * (u / base - base.ln());
            }
            KernelFamily::Matern => {
                let s = SQRT3 * r2.sqrt() / self.lengthscale;
                let e = (-s).exp();
                out[0] = self.gamma * (1.0 + s) * e;
                out[1] = self.gamma * s * s * e;
            }
        }
    }

    /// Cross-covariance matrix `k(rows, cols)`.
    pub fn gram(&self, rows: &[GridPoint], cols: &[GridPoint]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.eval(rows[a], cols[b]))
    }

    /// Symmetric Gram matrix `k(points, points)`.
    pub fn gram_sym(&self, points: &[GridPoint]) -> DMatrix<f64> {
        let n = points.len();
        let mut k = DMatrix::zeros(n, n);
        for b in 0..n {
            k[(b, b)] = self.eval_sq_dist(0.0);
            for a in (b + 1)..n {
                let v = self.eval(points[a], points[b]);
                k[(a, b)] = v;
                k[(b, a)] = v;
            }
        }
        k
    }

    /// `∂K/∂log θ` for every free hyperparameter.
    pub fn gradient(&self, rows: &[GridPoint], cols: &[GridPoint]) -> Vec<(Hyper, DMatrix<f64>)> {
        let params = self.free_params();
        let mut mats: Vec<DMatrix<f64>> = params.iter().map(|_| DMatrix::zeros(rows.len(), cols.len())).collect();
        let mut buf = [0.0; 3];
        for b in 0..cols.len() {
            for a in 0..rows.len() {
                self.grad_sq_dist(rows[a].dist_sq(cols[b]), &mut buf);
                for (m, g) in mats.iter_mut().zip(buf.iter()) {
                    m[(a, b)] = *g;
                }
            }
        }
        params.iter().copied().zip(mats).collect()
    }

    /// `∂K/∂log θ` for a single hyperparameter.
    pub fn gradient_wrt(&self, hyper: Hyper, rows: &[GridPoint], cols: &[GridPoint]) -> Result<DMatrix<f64>> {
        if !self.is_free(hyper) {
            return Err(Error::UnsupportedHyperparameter(hyper.name()));
        }
        Ok(self
            .gradient(rows, cols)
            .into_iter()
            .find(|(h, _)| *h == hyper)
            .map(|(_, m)| m)
            .expect("free parameter has a gradient"))
    }

    /// Symmetric Gram matrix and its log-parameter gradients in one pass.
    ///
    /// Grid distances take few distinct values, so each distinct squared
    /// distance is evaluated once.
    pub fn gram_and_gradient(&self, points: &[GridPoint]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let n = points.len();
        let np = self.free_params().len();
        let max_r2 = points
            .iter()
            .flat_map(|a| points.iter().map(move |b| a.dist_sq(*b)))
            .fold(0.0f64, f64::max) as usize;
        let table = if max_r2 <= 1 << 16 {
            let mut t = vec![[0.0f64; 4]; max_r2 + 1];
            for (r2, row) in t.iter_mut().enumerate() {
                let r2 = r2 as f64;
                row[0] = self.eval_sq_dist(r2);
                self.grad_sq_dist(r2, &mut row[1..]);
            }
            Some(t)
        } else {
            None
        };
        let mut k = DMatrix::zeros(n, n);
        let mut grads: Vec<DMatrix<f64>> = (0..np).map(|_| DMatrix::zeros(n, n)).collect();
        let mut row = [0.0f64; 4];
        for b in 0..n {
            for a in b..n {
                let r2 = points[a].dist_sq(points[b]);
                match &table {
                    Some(t) => row = t[r2 as usize],
                    None => {
                        row[0] = self.eval_sq_dist(r2);
                        self.grad_sq_dist(r2, &mut row[1..]);
                    }
                }
                k[(a, b)] = row[0];
                k[(b, a)] = row[0];
                for (p, g) in grads.iter_mut().enumerate() {
                    g[(a, b)] = row[p + 1];
                    g[(b, a)] = row[p + 1];
                }
            }
        }
        (k, grads)
    }

    /// Free hyperparameters in log space.
    pub fn log_params(&self) -> Vec<f64> {
        self.free_params().iter().map(|&h| self.get(h).ln()).collect()
    }

    /// Copy with free hyperparameters set from log values (clamped into bounds).
    pub fn from_log_params(&self, x: &[f64]) -> Self {
        let mut s = *self;
        for (&h, &v) in self.free_params().iter().zip(x) {
            let (lo, hi) = self.bounds.get(h);
            s = s.with(h, v.exp().clamp(lo, hi));
        }
        s
    }

    /// Log-space box for the free hyperparameters.
    pub fn log_bounds(&self) -> Vec<(f64, f64)> {
        self.free_params()
            .iter()
            .map(|&h| {
                let (lo, hi) = self.bounds.get(h);
                (lo.ln(), hi.ln())
            })
            .collect()
    }
}
