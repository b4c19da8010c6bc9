//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative jitters tried in order, as multiples of `trace / d`.
const JITTER_LADDER: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factorization that retries with growing diagonal jitter.
///
/// The jitter starts at zero and climbs from `1e-12 · trace/d` to
/// `1e-6 · trace/d` in decades before giving up.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let d = m.nrows();
    if d == 0 || m.ncols() != d {
        return Err(Error::Numerical(format!(
            "cholesky of a non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.trace() / d as f64;
    for rel in JITTER_LADDER {
        if rel > 0.0 && !(scale > 0.0 && scale.is_finite()) {
            break;
        }
        let mut a = m.clone();
        if rel > 0.0 {
            for i in 0..d {
                a[(i, i)] += rel * scale;
            }
        }
        if let Some(c) = Cholesky::new(a) {
            return Ok(c);
        }
    }
    Err(Error::Numerical(format!(
        "matrix is not positive definite even with jitter 1e-6*trace/d (trace {})",
        m.trace()
    )))
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = cholesky_with_jitter(m)?.inverse();
    Ok(symmetrize(inv))
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// `sqrt(aᵀ M a)`.
pub fn weighted_norm(a: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (m * a).dot(a).max(0.0).sqrt()
}

/// Draws from `N(mean, cov)`. A zero covariance returns `mean` unchanged.
pub fn sample_gaussian<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = mean.len();
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    if cov.iter().all(|x| *x == 0.0) {
        return Ok(mean.clone());
    }
    let chol = cholesky_with_jitter(cov)?;
    Ok(mean + chol.l() * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::RngStream;

    #[test]
    fn jitter_rescues_semidefinite() {
        // rank one, so the plain factorization fails
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        assert!(Cholesky::new(m.clone()).is_none());
        assert!(cholesky_with_jitter(&m).is_ok());
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky_with_jitter(&m), Err(Error::Numerical(_))));
        let z = DMatrix::<f64>::zeros(2, 2);
        assert!(cholesky_with_jitter(&z).is_err());
    }

    #[test]
    fn zero_covariance_returns_mean() {
        let mean = DVector::from_vec(vec![0.3, -0.7]);
        let mut rng = RngStream::new(0, 0);
        let x = sample_gaussian(&mean, &DMatrix::zeros(2, 2), &mut rng).unwrap();
        assert_eq!(x, mean);
    }

    #[test]
    fn sample_covariance_matches_identity() {
        // Each entry of the sample covariance has sd ~ 1/sqrt(n) (~0.003 at
        // 1e5 draws); the Frobenius error over 4 entries stays well under 0.02.
        let mean = DVector::zeros(2);
        let cov = DMatrix::identity(2, 2);
        let mut rng = RngStream::new(17, 1);
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let x = sample_gaussian(&mean, &cov, &mut rng).unwrap();
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        assert!((acc - cov).norm() < 0.02);
    }
}
