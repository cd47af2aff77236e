//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};

pub fn gaussian_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // column-major fill keeps the draw order stable
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Rejects matrices with `max|M - Mᵀ| > 1e-10 · max|M|`.
pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(LabError::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    let scale = m.amax();
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > 1e-10 * scale {
        return Err(LabError::NotSymmetric(worst));
    }
    Ok(())
}

/// Lower-triangular factor `L` with `LLᵀ = M`; pivots below `pivot_tol` are rejected.
pub fn cholesky_lower(m: &DMatrix<f64>, pivot_tol: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > pivot_tol) {
            return Err(LabError::NotPositiveDefinite(format!("pivot {j} is {diag:e}")));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// log det of an SPD matrix through its Cholesky factor.
pub fn spd_logdet(m: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky_lower(m, 0.0)?;
    Ok(2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// diagonal of R made positive.
pub fn haar_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(d, d, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Removes the components of `v` along an orthonormal `basis`, twice.
pub fn project_out(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Vectors whose
/// residual falls below `rel_tol` times their norm are reported as dependent.
pub fn orthonormal_basis(vectors: &[DVector<f64>], rel_tol: f64) -> Result<Vec<DVector<f64>>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for (idx, v) in vectors.iter().enumerate() {
        let norm0 = v.norm();
        let mut w = v.clone();
        project_out(&mut w, &basis);
        let n = w.norm();
        if !(n > rel_tol * norm0) || norm0 == 0.0 {
            return Err(LabError::Degenerate(format!(
                "vector {idx} is numerically dependent (residual {n:e}, norm {norm0:e})"
            )));
        }
        basis.push(w / n);
    }
    Ok(basis)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn haar_is_orthogonal() {
        let mut rng = derive_stream(1, &[]);
        let q = haar_orthogonal(12, &mut rng);
        let e = &q.transpose() * &q - DMatrix::identity(12, 12);
        assert!(e.amax() < 1e-12);
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0]);
        let l = cholesky_lower(&m, 1e-12).unwrap();
        assert!((&l * l.transpose() - &m).amax() < 1e-12);
        assert!(cholesky_lower(&(-m), 1e-12).is_err());
    }

    #[test]
    fn asymmetric_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(check_symmetric(&m), Err(LabError::NotSymmetric(_))));
    }
}
