//! Best linear unbiased predictor of `u = vec(H)` from selected noisy entries,
//! `û = K Bᴴ (B K Bᴴ + σ² I)⁻¹ h`, evaluated with dense linear algebra.

use crate::error::{Error, Result};
use crate::grid::GridPoint;
use crate::linalg::{solve_general, CMatrix, CVector, C64};

/// Row-selection matrix `B` with exactly one unit entry per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    indices: Vec<usize>,
    dim: usize,
}

impl Selector {
    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::DimensionMismatch(format!("selector index {bad} >= {dim}")));
        }
        Ok(Self { indices, dim })
    }

    /// Selects grid entries under column-major vectorization of an `n_rx`-row matrix.
    pub fn from_grid(points: &[GridPoint], n_rx: usize, n_tx: usize) -> Result<Self> {
        Self::new(points.iter().map(|p| p.row + p.col * n_rx).collect(), n_rx * n_tx)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn to_matrix(&self) -> CMatrix {
        let mut b = CMatrix::zeros(self.indices.len(), self.dim);
        for (row, &col) in self.indices.iter().enumerate() {
            b[(row, col)] = C64::new(1.0, 0.0);
        }
        b
    }
}

pub fn blup_oracle(
    covariance: &CMatrix,
    selector: &Selector,
    noise_variance: f64,
    h: &CVector,
) -> Result<CVector> {
    if covariance.nrows() != selector.dim || covariance.ncols() != selector.dim {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, selector expects {}",
            covariance.nrows(),
            covariance.ncols(),
            selector.dim
        )));
    }
    if h.len() != selector.indices.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for {} selected entries",
            h.len(),
            selector.indices.len()
        )));
    }
    let b = selector.to_matrix();
    let k_bh = covariance * b.adjoint();
    let mut inner = &b * &k_bh;
    for i in 0..inner.nrows() {
        inner[(i, i)] += C64::new(noise_variance, 0.0);
    }
    let rhs = CMatrix::from_column_slice(h.len(), 1, h.as_slice());
    let weights = solve_general(&inner, &rhs, "B K Bᴴ + σ² I")?;
    let u = k_bh * weights;
    Ok(CVector::from_column_slice(u.as_slice()))
}
