//! Dense linear-algebra helpers shared across modules.
//!
//! Vectorization is column-major everywhere: entry `(i, j)` of an `nr x nc`
//! matrix lands at position `i + j * nr` of `vec(M)`.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest entrywise deviation `|M - M^H|`.
pub fn hermitian_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn vec_col_major(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVector, nrows: usize, ncols: usize) -> CMatrix {
    assert_eq!(v.len(), nrows * ncols, "unvec length mismatch");
    CMatrix::from_column_slice(nrows, ncols, v.as_slice())
}

/// Column-major linear index of `(row, col)` in an `nrows`-row matrix.
#[inline]
pub fn vec_index(row: usize, col: usize, nrows: usize) -> usize {
    row + col * nrows
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order (eigenvectors permuted accordingly).
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `U diag(d) U^H` for a real diagonal.
pub fn from_eigen(values: &DVector<f64>, vectors: &CMatrix) -> CMatrix {
    let mut scaled = vectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col.scale_mut(values[k]);
    }
    scaled * vectors.adjoint()
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn check_finite(m: &CMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Solves `A x = b` for Hermitian positive definite `A` (Cholesky).
pub fn solve_hpd(a: &CMatrix, b: &CMatrix, what: &'static str) -> Result<CMatrix> {
    let chol = a.clone().cholesky().ok_or(Error::Singular(what))?;
    Ok(chol.solve(b))
}

/// Solves a general square system with partial-pivoting LU.
pub fn solve_general(a: &CMatrix, b: &CMatrix, what: &'static str) -> Result<CMatrix> {
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or(Error::Singular(what))?;
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular(what))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_index_matches_storage() {
        let m = CMatrix::from_fn(3, 4, |i, j| C64::new(i as f64, j as f64));
        let v = vec_col_major(&m);
        for j in 0..4 {
            for i in 0..3 {
                assert_eq!(v[vec_index(i, j, 3)], m[(i, j)]);
            }
        }
        assert_eq!(unvec(&v, 3, 4), m);
    }

    #[test]
    fn eigen_roundtrip_sorted() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)],
        );
        let (vals, vecs) = hermitian_eigen(&m);
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        assert!(frobenius(&(from_eigen(&vals, &vecs) - &m)) < 1e-12);
    }
}
