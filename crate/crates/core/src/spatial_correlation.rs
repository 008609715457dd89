//! Spatial covariance of uniform linear arrays under the Gaussian
//! local-scattering model.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::linalg::{from_eigen, hermitian_asymmetry, hermitian_eigen, hermitian_part, CMatrix, C64};

/// Default element spacing in wavelengths.
pub const DEFAULT_SPACING: f64 = 0.5;
/// Default angle spread in radians.
pub const DEFAULT_ANGLE_SPREAD: f64 = PI / 6.0;
/// Carrier frequency in Hz. Informational only: geometry is wavelength-normalized.
pub const CARRIER_FREQUENCY_HZ: f64 = 28e9;

/// Relative eigenvalue floor used when repairing round-off in PSD matrices.
const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    /// Element spacing `d / λ`.
    pub spacing_wavelengths: f64,
    /// Mean angle of arrival/departure, radians.
    pub mean_angle: f64,
    /// Standard deviation of the angular spread, radians.
    pub angle_spread: f64,
}

impl ArrayGeometry {
    pub fn new(
        num_elements: usize,
        spacing_wavelengths: f64,
        mean_angle: f64,
        angle_spread: f64,
    ) -> Result<Self> {
        let g = Self {
            num_elements,
            spacing_wavelengths,
            mean_angle,
            angle_spread,
        };
        g.validate()?;
        Ok(g)
    }

    /// Half-wavelength array with a π/6 angle spread around broadside.
    pub fn ula(num_elements: usize) -> Result<Self> {
        Self::new(num_elements, DEFAULT_SPACING, 0.0, DEFAULT_ANGLE_SPREAD)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_elements == 0 {
            return Err(invalid("num_elements", "must be at least 1"));
        }
        if !(self.spacing_wavelengths > 0.0 && self.spacing_wavelengths.is_finite()) {
            return Err(invalid("spacing_wavelengths", "must be positive and finite"));
        }
        if !(self.angle_spread > 0.0 && self.angle_spread.is_finite()) {
            return Err(invalid("angle_spread", "must be positive and finite"));
        }
        if !self.mean_angle.is_finite() {
            return Err(invalid("mean_angle", "must be finite"));
        }
        Ok(())
    }
}

/// Hermitian PSD covariance with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    matrix: CMatrix,
}

impl SpatialCovariance {
    /// Wraps a matrix after checking it is Hermitian, PSD, and unit-diagonal.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let asym = hermitian_asymmetry(&matrix);
        if asym > 1e-12 {
            return Err(Error::NotHermitian(asym));
        }
        for (i, d) in matrix.diagonal().iter().enumerate() {
            if (d - C64::new(1.0, 0.0)).norm() > 1e-12 {
                return Err(invalid("covariance", format!("diagonal entry {i} is {d}, expected 1")));
            }
        }
        let (values, _) = hermitian_eigen(&matrix);
        let max = values.max();
        if values.min() < -1e-10 * max.abs().max(f64::MIN_POSITIVE) {
            return Err(invalid("covariance", "matrix is not positive semidefinite"));
        }
        Ok(Self { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: CMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenvalues (descending, clamped at zero) and unitary eigenvectors.
    pub fn eigen(&self) -> (DVector<f64>, CMatrix) {
        let (mut values, vectors) = hermitian_eigen(&self.matrix);
        clamp_spectrum(&mut values);
        (values, vectors)
    }

    pub fn sqrt(&self) -> CMatrix {
        let (values, vectors) = self.eigen();
        from_eigen(&values.map(f64::sqrt), &vectors)
    }
}

/// Gaussian local-scattering covariance of a uniform linear array:
/// `R[m, n] = exp(j 2π δ (m-n) sin φ) · exp(-½ (2π δ (m-n) cos φ σ)²)`.
pub fn build_covariance(geometry: &ArrayGeometry) -> Result<SpatialCovariance> {
    geometry.validate()?;
    let n = geometry.num_elements;
    let phase = 2.0 * PI * geometry.spacing_wavelengths * geometry.mean_angle.sin();
    let decay = 2.0 * PI * geometry.spacing_wavelengths * geometry.mean_angle.cos() * geometry.angle_spread;
    let lag = |k: f64| C64::from_polar((-0.5 * (decay * k).powi(2)).exp(), phase * k);
    let raw = CMatrix::from_fn(n, n, |m, k| lag(m as f64 - k as f64));
    let mut matrix = hermitian_part(&raw);
    for i in 0..n {
        matrix[(i, i)] = C64::new(1.0, 0.0);
    }
    Ok(SpatialCovariance { matrix })
}

fn clamp_spectrum(values: &mut DVector<f64>) {
    let floor = EIGEN_FLOOR * values.iter().fold(0.0f64, |a, &v| a.max(v));
    values.iter_mut().for_each(|v| {
        if *v < floor {
            *v = 0.0;
        }
    });
}

/// Hermitian PSD square root via eigendecomposition; small and negative
/// eigenvalues are clamped to zero.
pub fn matrix_sqrt(cov: &CMatrix) -> Result<CMatrix> {
    if !cov.is_square() {
        return Err(Error::DimensionMismatch("matrix_sqrt expects a square matrix".into()));
    }
    let scale = cov.iter().fold(1.0f64, |a, z| a.max(z.norm()));
    let asym = hermitian_asymmetry(cov);
    if asym > 1e-10 * scale {
        return Err(Error::NotHermitian(asym));
    }
    let (mut values, vectors) = hermitian_eigen(&hermitian_part(cov));
    clamp_spectrum(&mut values);
    Ok(from_eigen(&values.map(f64::sqrt), &vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use crate::rng::{complex_gaussian_matrix, rng_from_seed};
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn single_antenna_is_trivial() {
        let r = build_covariance(&ArrayGeometry::new(1, 0.3, 0.2, 0.1).unwrap()).unwrap();
        assert_eq!(r.matrix(), &CMatrix::from_element(1, 1, c(1.0)));
    }

    #[test]
    fn huge_spread_decorrelates() {
        let r = build_covariance(&ArrayGeometry::new(2, 0.5, 0.0, 100.0).unwrap()).unwrap();
        assert!(r.matrix()[(0, 1)].norm() < 1e-3);
    }

    #[test]
    fn three_element_matches_closed_form() {
        // Reference values evaluated at 30 digits.
        let r = build_covariance(&ArrayGeometry::new(3, 0.5, 0.0, PI / 6.0).unwrap()).unwrap();
        let lag1 = 0.258488508093738167937989486946;
        let lag2 = 0.00446441912386544255500568422299;
        let m = r.matrix();
        for (i, j, v) in [(0, 1, lag1), (1, 2, lag1), (0, 2, lag2), (2, 0, lag2)] {
            assert!((m[(i, j)] - c(v)).norm() < 1e-14, "({i},{j}) = {}", m[(i, j)]);
        }
    }

    #[test]
    fn off_broadside_phase() {
        let r = build_covariance(&ArrayGeometry::new(2, 0.5, 0.3, 0.2).unwrap()).unwrap();
        let expected = C64::new(0.500344078391236211551273442976, 0.668668908495400470577908822554);
        assert!((r.matrix()[(1, 0)] - expected).norm() < 1e-14);
        assert!((r.matrix()[(0, 1)] - expected.conj()).norm() < 1e-14);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ArrayGeometry::new(0, 0.5, 0.0, 0.1).is_err());
        assert!(ArrayGeometry::new(2, 0.0, 0.0, 0.1).is_err());
        assert!(ArrayGeometry::new(2, 0.5, 0.0, -0.1).is_err());
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let id = CMatrix::identity(3, 3);
        assert!(frobenius(&(matrix_sqrt(&id).unwrap() - &id)) < 1e-14);
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(4.0), c(1.0)]));
        let s = matrix_sqrt(&d).unwrap();
        let expected = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0), c(1.0)]));
        assert!(frobenius(&(s - expected)) < 1e-14);
    }

    #[test]
    fn sqrt_reconstructs_random_psd() {
        let mut rng = rng_from_seed(11);
        let a = complex_gaussian_matrix(&mut rng, 4, 4, 1.0);
        let cov = &a * a.adjoint();
        let s = matrix_sqrt(&cov).unwrap();
        assert!(frobenius(&(&s * &s - &cov)) / frobenius(&cov) < 1e-8);
        assert!(hermitian_asymmetry(&s) < 1e-12);
    }

    #[test]
    fn sqrt_rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(0.0), c(1.0)]);
        assert!(matches!(matrix_sqrt(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn sqrt_spectrum_is_root_of_spectrum() {
        let mut rng = rng_from_seed(5);
        let a = complex_gaussian_matrix(&mut rng, 5, 3, 1.0);
        let cov = &a * a.adjoint(); // rank 3
        let s = matrix_sqrt(&cov).unwrap();
        let (ev_cov, _) = hermitian_eigen(&cov);
        let (ev_s, _) = hermitian_eigen(&s);
        for k in 0..5 {
            assert!((ev_s[k] - ev_cov[k].max(0.0).sqrt()).abs() < 1e-7, "k={k}");
        }
    }

    proptest! {
        #[test]
        fn covariance_invariants(
            n in 1usize..12,
            spacing in 0.05f64..2.0,
            mean in -1.5f64..1.5,
            spread in 0.01f64..1.5,
        ) {
            let r = build_covariance(&ArrayGeometry::new(n, spacing, mean, spread).unwrap()).unwrap();
            let m = r.matrix();
            prop_assert!(hermitian_asymmetry(m) <= 1e-12);
            for i in 0..n {
                prop_assert!((m[(i, i)] - c(1.0)).norm() <= 1e-12);
            }
            let (vals, _) = hermitian_eigen(m);
            prop_assert!(vals.min() >= -1e-10 * vals.max());
            // Toeplitz
            for i in 1..n {
                for j in 1..n {
                    prop_assert!((m[(i, j)] - m[(i - 1, j - 1)]).norm() <= 1e-12);
                }
            }
            prop_assert!(SpatialCovariance::from_matrix(m.clone()).is_ok());
        }
    }
}
