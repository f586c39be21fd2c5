//! Closed-form 2-Wasserstein distance between Gaussian summaries.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Mean and covariance of a feature distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::dims((mean.len(), mean.len()), (cov.nrows(), cov.ncols())));
        }
        Ok(GaussStats { mean, cov })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::NonSymmetricInput);
            }
        }
    }
    Ok(())
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
fn spectral(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Principal square root with negative eigenvalues clamped to zero.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral(m, |l| l.max(0.0).sqrt())
}

/// ‖μ₁ − μ₂‖² + tr(C₁ + C₂ − 2(√C₁ C₂ √C₁)^½), evaluated in the given order.
fn squared_one_way(a: &GaussStats, b: &GaussStats) -> f64 {
    let dm = (&a.mean - &b.mean).norm_squared();
    let r = sqrt_psd(&a.cov);
    let cross = sqrt_psd(&(&r * &b.cov * &r));
    dm + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace()
}

fn validate(a: &GaussStats, b: &GaussStats) -> Result<()> {
    if a.channels() != b.channels() {
        return Err(Error::dims((a.channels(), 1), (b.channels(), 1)));
    }
    check_symmetric(&a.cov)?;
    check_symmetric(&b.cov)
}

/// W2 between two Gaussians. Both argument orders are evaluated and
/// averaged so the result is exactly symmetric in floating point.
pub fn gaussian_w2(a: &GaussStats, b: &GaussStats) -> Result<f64> {
    validate(a, b)?;
    let sq = 0.5 * (squared_one_way(a, b) + squared_one_way(b, a));
    Ok(sq.max(0.0).sqrt())
}

/// W2 together with its derivatives with respect to the first argument's
/// mean and covariance. Uses tr((√C₂ C₁ √C₂)^½), which equals the cross term
/// and differentiates to ½ √C₂ (√C₂ C₁ √C₂)^(−½) √C₂.
pub fn gaussian_w2_grad(a: &GaussStats, b: &GaussStats) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let value = gaussian_w2(a, b)?;
    let c = a.channels();
    if value <= 0.0 {
        return Ok((0.0, DVector::zeros(c), DMatrix::zeros(c, c)));
    }
    let s2 = sqrt_psd(&b.cov);
    let y = &s2 * &a.cov * &s2;
    let y_inv_sqrt = spectral(&y, |l| 1.0 / l.max(1e-12).sqrt());
    let d_cross = &s2 * y_inv_sqrt * &s2;
    let d_sq_cov = DMatrix::identity(c, c) - d_cross;
    let d_sq_mean = (&a.mean - &b.mean) * 2.0;
    // d sqrt(s) = ds / (2 sqrt(s))
    let k = 0.5 / value;
    Ok((value, d_sq_mean * k, d_sq_cov * k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: &[f64], cov: &[f64]) -> GaussStats {
        let c = mean.len();
        GaussStats::new(DVector::from_column_slice(mean), DMatrix::from_row_slice(c, c, cov)).unwrap()
    }

    #[test]
    fn hand_values() {
        let a = stats(&[0.0], &[1.0]);
        let b = stats(&[3.0], &[1.0]);
        assert!((gaussian_w2(&a, &b).unwrap() - 3.0).abs() < 1e-12);

        let a = stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 4.0]);
        let b = stats(&[0.0, 0.0], &[4.0, 0.0, 0.0, 1.0]);
        assert!((gaussian_w2(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(gaussian_w2(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn rejects_asymmetric_and_mismatched() {
        let a = stats(&[0.0, 0.0], &[1.0, 0.5, 0.0, 1.0]);
        let b = stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(gaussian_w2(&a, &b), Err(Error::NonSymmetricInput)));
        let c = stats(&[0.0], &[1.0]);
        assert!(matches!(gaussian_w2(&b, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = stats(&[0.3, -1.0, 2.0], &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        let b = stats(&[1.0, 0.5, -0.5], &[1.0, -0.1, 0.0, -0.1, 2.5, 0.4, 0.0, 0.4, 0.7]);
        let (_, gm, gc) = gaussian_w2_grad(&a, &b).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut p = a.clone();
            p.mean[i] += h;
            let mut m = a.clone();
            m.mean[i] -= h;
            let fd = (gaussian_w2(&p, &b).unwrap() - gaussian_w2(&m, &b).unwrap()) / (2.0 * h);
            assert!((fd - gm[i]).abs() < 1e-7, "mean {i}: {fd} vs {}", gm[i]);
        }
        for i in 0..3 {
            for j in 0..3 {
                // symmetric perturbation: the directional derivative is
                // gc[ij] + gc[ji] off the diagonal
                let mut p = a.clone();
                let mut m = a.clone();
                p.cov[(i, j)] += h;
                m.cov[(i, j)] -= h;
                if i != j {
                    p.cov[(j, i)] += h;
                    m.cov[(j, i)] -= h;
                }
                let fd = (gaussian_w2(&p, &b).unwrap() - gaussian_w2(&m, &b).unwrap()) / (2.0 * h);
                let an = if i == j { gc[(i, i)] } else { gc[(i, j)] + gc[(j, i)] };
                assert!((fd - an).abs() < 1e-7, "cov {i}{j}: {fd} vs {an}");
            }
        }
    }
}
