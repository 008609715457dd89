//! Full-pilot least-squares and MMSE channel estimators.

use crate::channel_models::ChannelMatrix;
use crate::error::{invalid, Error, Result};
use crate::linalg::{check_finite, hermitian_eigen, kron, solve_general, solve_hpd, unvec, vec_col_major, CMatrix};
use crate::pilot_probing::build_pilot_matrix;
use crate::rng::{complex_gaussian_matrix, rng_from_seed};

#[derive(Debug, Clone)]
pub struct FullPilotObservation {
    /// `Y = H S + N`, `N_r x T`.
    pub received: CMatrix,
    /// Row-orthonormal `N_t x T` pilot matrix.
    pub pilots: CMatrix,
    pub noise_variance: f64,
}

impl FullPilotObservation {
    pub fn new(received: CMatrix, pilots: CMatrix, noise_variance: f64) -> Result<Self> {
        if received.ncols() != pilots.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "received has {} columns, pilots have {}",
                received.ncols(),
                pilots.ncols()
            )));
        }
        if pilots.ncols() < pilots.nrows() {
            return Err(invalid("pilots", "pilot length shorter than the transmit array"));
        }
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(invalid("noise_variance", "must be finite and nonnegative"));
        }
        Ok(Self {
            received,
            pilots,
            noise_variance,
        })
    }
}

/// Simulates full-array training with `T = N_t` DFT pilots.
///
/// Noise is drawn column by column from `seed`, so the first columns match
/// the reduced-pilot draw of [`crate::pilot_probing::observe`] under the same seed.
pub fn observe_full(channel: &ChannelMatrix, noise_variance: f64, seed: u64) -> Result<FullPilotObservation> {
    let (nr, nt) = (channel.n_rx(), channel.n_tx());
    let pilots = build_pilot_matrix(nt, nt)?;
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(invalid("noise_variance", "must be finite and nonnegative"));
    }
    let mut rng = rng_from_seed(seed);
    let noise = complex_gaussian_matrix(&mut rng, nr, nt, noise_variance);
    let received = channel.entries() * &pilots + noise;
    FullPilotObservation::new(received, pilots, noise_variance)
}

const RANK_TOL: f64 = 1e-12;

/// `Ĥ = Y Sᴴ (S Sᴴ)⁻¹`.
pub fn estimate_ls(obs: &FullPilotObservation) -> Result<ChannelMatrix> {
    let s = &obs.pilots;
    let gram = s * s.adjoint();
    let (eig, _) = hermitian_eigen(&gram);
    if eig[eig.len() - 1] <= RANK_TOL * eig[0] {
        return Err(Error::Singular("pilot matrix is rank deficient"));
    }
    let y_sh = &obs.received * s.adjoint();
    // Ĥ (S Sᴴ) = Y Sᴴ  ⇔  (S Sᴴ) Ĥᴴ = (Y Sᴴ)ᴴ
    let h_adj = solve_hpd(&gram, &y_sh.adjoint(), "S Sᴴ").map_err(|_| Error::Singular("pilot matrix is rank deficient"))?;
    ChannelMatrix::new(h_adj.adjoint())
}

/// Linear MMSE filter `W = R_H Aᴴ (A R_H Aᴴ + σ² I)⁻¹` with `A = Sᵀ ⊗ I_{N_r}`,
/// fixed for a given covariance, pilot matrix and noise level.
#[derive(Debug, Clone)]
pub struct MmseFilter {
    weights: CMatrix,
    n_rx: usize,
    n_tx: usize,
}

impl MmseFilter {
    pub fn new(covariance: &CMatrix, pilots: &CMatrix, noise_variance: f64, n_rx: usize) -> Result<Self> {
        let n_tx = pilots.nrows();
        let t = pilots.ncols();
        let dim = n_rx * n_tx;
        if covariance.nrows() != dim || covariance.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{}, expected {dim}x{dim}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        check_finite(covariance, "channel covariance")?;
        let a = kron(&pilots.transpose(), &CMatrix::identity(n_rx, n_rx));
        let a_r = &a * covariance;
        let mut inner = &a_r * a.adjoint();
        for i in 0..t * n_rx {
            inner[(i, i)] += noise_variance;
        }
        // W = (inner⁻¹ A R_H)ᴴ since both inner and R_H are Hermitian.
        let x = match solve_hpd(&inner, &a_r, "A R_H Aᴴ + σ² I") {
            Ok(x) => x,
            Err(_) => solve_general(&inner, &a_r, "A R_H Aᴴ + σ² I")?,
        };
        Ok(Self {
            weights: x.adjoint(),
            n_rx,
            n_tx,
        })
    }

    pub fn weights(&self) -> &CMatrix {
        &self.weights
    }

    pub fn apply(&self, received: &CMatrix) -> Result<ChannelMatrix> {
        if received.nrows() != self.n_rx || received.nrows() * received.ncols() != self.weights.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "received is {}x{}, filter expects {} rows and {} entries",
                received.nrows(),
                received.ncols(),
                self.n_rx,
                self.weights.ncols()
            )));
        }
        let u = &self.weights * vec_col_major(received);
        ChannelMatrix::new(unvec(&u, self.n_rx, self.n_tx))
    }
}

pub fn estimate_mmse(obs: &FullPilotObservation, covariance: &CMatrix) -> Result<ChannelMatrix> {
    MmseFilter::new(covariance, &obs.pilots, obs.noise_variance, obs.received.nrows())?.apply(&obs.received)
}
