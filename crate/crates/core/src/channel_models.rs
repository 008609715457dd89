//! Kronecker and Weichselberger channel models.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid, Error, Result};
use crate::linalg::{check_finite, kron, CMatrix, C64};
use crate::rng::{complex_gaussian_matrix, rng_from_seed};
use crate::spatial_correlation::SpatialCovariance;

/// Complex `N_r x N_t` channel gain matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: CMatrix,
}

impl ChannelMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        check_finite(&entries, "channel matrix")?;
        Ok(Self { entries })
    }

    pub fn zeros(n_rx: usize, n_tx: usize) -> Self {
        Self {
            entries: CMatrix::zeros(n_rx, n_tx),
        }
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_inner(self) -> CMatrix {
        self.entries
    }

    pub fn n_rx(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[(row, col)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Kronecker,
    Weichselberger,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Kronecker => "kronecker",
            ModelKind::Weichselberger => "weichselberger",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kronecker" | "kron" => Ok(ModelKind::Kronecker),
            "weichselberger" | "weich" => Ok(ModelKind::Weichselberger),
            other => Err(invalid("model", format!("unknown channel model `{other}`"))),
        }
    }
}

/// A channel model with its factorizations cached for repeated sampling.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    kind: ModelKind,
    r_tx: SpatialCovariance,
    r_rx: SpatialCovariance,
    coupling: Option<DMatrix<f64>>,
    sqrt_tx: CMatrix,
    sqrt_rx: CMatrix,
    eig_tx: (DVector<f64>, CMatrix),
    eig_rx: (DVector<f64>, CMatrix),
}

impl ChannelModel {
    pub fn kronecker(r_tx: SpatialCovariance, r_rx: SpatialCovariance) -> Self {
        let sqrt_tx = r_tx.sqrt();
        let sqrt_rx = r_rx.sqrt();
        let eig_tx = r_tx.eigen();
        let eig_rx = r_rx.eigen();
        Self {
            kind: ModelKind::Kronecker,
            r_tx,
            r_rx,
            coupling: None,
            sqrt_tx,
            sqrt_rx,
            eig_tx,
            eig_rx,
        }
    }

    /// Weichselberger model with coupling `Ω` (rows: receive eigenmodes,
    /// columns: transmit eigenmodes, ordered by descending eigenvalue).
    pub fn weichselberger(
        r_tx: SpatialCovariance,
        r_rx: SpatialCovariance,
        coupling: DMatrix<f64>,
    ) -> Result<Self> {
        let (nr, nt) = (r_rx.dim(), r_tx.dim());
        if coupling.shape() != (nr, nt) {
            return Err(Error::DimensionMismatch(format!(
                "coupling is {}x{}, expected {nr}x{nt}",
                coupling.nrows(),
                coupling.ncols()
            )));
        }
        if coupling.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(invalid("coupling", "entries must be finite and nonnegative"));
        }
        let total: f64 = coupling.sum();
        let target = (nr * nt) as f64;
        if (total - target).abs() > 1e-8 * target.max(1.0) {
            return Err(invalid(
                "coupling",
                format!("total power {total} differs from N_r*N_t = {target}"),
            ));
        }
        let mut model = Self::kronecker(r_tx, r_rx);
        model.kind = ModelKind::Weichselberger;
        model.coupling = Some(coupling);
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_rx(&self) -> usize {
        self.r_rx.dim()
    }

    pub fn n_tx(&self) -> usize {
        self.r_tx.dim()
    }

    pub fn r_tx(&self) -> &SpatialCovariance {
        &self.r_tx
    }

    pub fn r_rx(&self) -> &SpatialCovariance {
        &self.r_rx
    }

    pub fn coupling(&self) -> Option<&DMatrix<f64>> {
        self.coupling.as_ref()
    }

    pub fn sample(&self, seed: u64) -> ChannelMatrix {
        match self.kind {
            ModelKind::Kronecker => self.draw_kronecker(seed),
            ModelKind::Weichselberger => self.draw_weichselberger(seed),
        }
    }

    fn draw_kronecker(&self, seed: u64) -> ChannelMatrix {
        let mut rng = rng_from_seed(seed);
        let g = complex_gaussian_matrix(&mut rng, self.n_rx(), self.n_tx(), 1.0);
        ChannelMatrix {
            entries: &self.sqrt_rx * g * &self.sqrt_tx,
        }
    }

    fn draw_weichselberger(&self, seed: u64) -> ChannelMatrix {
        let omega = self.coupling.as_ref().expect("weichselberger model carries a coupling matrix");
        let mut rng = rng_from_seed(seed);
        let mut a = complex_gaussian_matrix(&mut rng, self.n_rx(), self.n_tx(), 1.0);
        a.zip_apply(omega, |z, w| *z *= w.sqrt());
        let (u_r, u_t) = (&self.eig_rx.1, &self.eig_tx.1);
        ChannelMatrix {
            entries: u_r * a * u_t.adjoint(),
        }
    }
}

/// `H = R_r^{1/2} G R_t^{1/2}` with `G` i.i.d. CN(0, 1).
pub fn sample_kronecker(model: &ChannelModel, seed: u64) -> Result<ChannelMatrix> {
    if model.kind != ModelKind::Kronecker {
        return Err(invalid("model", "expected a Kronecker model"));
    }
    Ok(model.draw_kronecker(seed))
}

/// `H = U_r Ã U_t^H` with `Ã_ij ~ CN(0, Ω_ij)`.
pub fn sample_weichselberger(model: &ChannelModel, seed: u64) -> Result<ChannelMatrix> {
    if model.kind != ModelKind::Weichselberger {
        return Err(invalid("model", "expected a Weichselberger model"));
    }
    Ok(model.draw_weichselberger(seed))
}

/// Covariance of `vec(H)` (column-major).
pub fn vectorized_covariance(model: &ChannelModel) -> CMatrix {
    match model.kind {
        ModelKind::Kronecker => kron(&model.r_tx.matrix().transpose(), model.r_rx.matrix()),
        ModelKind::Weichselberger => {
            let omega = model.coupling.as_ref().expect("coupling present");
            let (u_r, u_t) = (&model.eig_rx.1, &model.eig_tx.1);
            let q = kron(&u_t.conjugate(), u_r);
            let nr = model.n_rx();
            let mut scaled = q.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                // column k of Q pairs with vec(Ω)[k] = Ω[k % nr, k / nr]
                col.scale_mut(omega[(k % nr, k / nr)]);
            }
            scaled * q.adjoint()
        }
    }
}

/// `Ω = (1 - richness) λ_r λ_tᵀ + richness E`, with `E_ij ~ Exp(1)`,
/// rescaled so that the total power is `N_r N_t`.
pub fn default_coupling(
    r_tx: &SpatialCovariance,
    r_rx: &SpatialCovariance,
    richness: f64,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&richness) {
        return Err(invalid("richness", format!("{richness} is outside [0, 1]")));
    }
    let (lam_t, _) = r_tx.eigen();
    let (lam_r, _) = r_rx.eigen();
    let (nr, nt) = (lam_r.len(), lam_t.len());
    let kron_part = &lam_r * lam_t.transpose();
    let mut rng = rng_from_seed(seed);
    let rand_part = DMatrix::from_fn(nr, nt, |_, _| {
        let e: f64 = Exp1.sample(&mut rng);
        e
    });
    let mut omega = kron_part * (1.0 - richness) + rand_part * richness;
    let total = omega.sum();
    omega *= (nr * nt) as f64 / total;
    Ok(omega)
}
