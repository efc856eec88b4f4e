//! Dense factorization helpers over `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Cholesky factor of a symmetric positive definite matrix. On failure a
/// jitter of `1e-10 · mean(diag)` is added to the diagonal once before
/// giving up.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows().max(1);
    let jitter = 1e-10 * m.diagonal().iter().sum::<f64>().abs() / n as f64;
    let mut j = m.clone();
    for i in 0..m.nrows() {
        j[(i, i)] += jitter;
    }
    Cholesky::new(j).ok_or_else(|| {
        Error::Decomposition(format!(
            "{}×{} matrix is not positive definite (jitter {jitter:e} applied)",
            m.nrows(),
            m.ncols()
        ))
    })
}

pub fn chol_log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Lower factor `L` with `L Lᵀ = m` for a symmetric positive semidefinite
/// matrix. Pivots below `tol · max(diag)` are treated as exact zeros, so
/// degenerate (e.g. perfectly interpolated) covariances are accepted. A
/// pivot below `−tol · max(diag)` means the matrix is indefinite.
pub fn psd_cholesky(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let scale = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = 0.5 * (m[(j, j)] + m[(j, j)]);
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol * scale {
            return Err(Error::Decomposition(format!(
                "matrix is not positive semidefinite (pivot {d:e} at {j})"
            )));
        }
        if d <= tol * scale {
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in j + 1..n {
            let mut s = 0.5 * (m[(i, j)] + m[(j, i)]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Ok(l)
}

pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b).expect("non-singular triangular factor")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_borderline_matrix() {
        // rank-one matrix: singular, jitter makes it PD
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        assert!(cholesky_jittered(&m).is_ok());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        assert!(cholesky_jittered(&indefinite).is_err());
    }

    #[test]
    fn psd_factor_reconstructs() {
        let v = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let m = &v * v.transpose() + DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0]));
        let l = psd_cholesky(&m, 1e-12).unwrap();
        let back = &l * l.transpose();
        assert!((back - m).abs().max() < 1e-12);
    }

    #[test]
    fn log_det_matches_product() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let c = cholesky_jittered(&m).unwrap();
        assert!((chol_log_det(&c) - 11f64.ln()).abs() < 1e-14);
    }
}
