//! Multivariate normal in precision form.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `N(μ, Υ)` stored through the Cholesky factor `L` of the precision `Υ⁻¹ = LLᵀ`.
#[derive(Debug, Clone)]
pub struct GaussianFit {
    pub mean: DVector<f64>,
    prec_chol: DMatrix<f64>,
}

impl GaussianFit {
    pub fn from_precision(mean: DVector<f64>, precision: &DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(precision.clone()).ok_or(Error::NotPositiveDefinite("precision"))?;
        Ok(Self { mean, prec_chol: chol.l() })
    }

    pub fn from_covariance(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite("covariance"))?;
        let mut prec = chol.inverse();
        crate::linalg::symmetrize(&mut prec);
        Self::from_precision(mean, &prec)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision_factor(&self) -> &DMatrix<f64> {
        &self.prec_chol
    }

    /// A zero-mean draw `L⁻ᵀz`, covariance Υ.
    pub fn sample_centered<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = standard_normal_vec(rng, self.dim());
        solve_upper_from_lower(&self.prec_chol, z)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.sample_centered(rng) + &self.mean
    }

    /// `(θ − μ)ᵀΥ⁻¹(θ − μ)`.
    pub fn mahalanobis(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.mean;
        (self.prec_chol.tr_mul(&d)).norm_squared()
    }
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Solves `Lᵀx = z` in place for lower-triangular `L`.
pub(crate) fn solve_upper_from_lower(l: &DMatrix<f64>, mut z: DVector<f64>) -> DVector<f64> {
    l.tr_solve_lower_triangular_mut(&mut z);
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn draws_have_requested_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let fit = GaussianFit::from_covariance(DVector::from_vec(vec![1.0, -1.0]), &cov).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let n = 100_000;
        let mut s = DMatrix::zeros(2, 2);
        let mut m = DVector::zeros(2);
        for _ in 0..n {
            let x = fit.sample(&mut rng);
            m += &x;
            let c = &x - &fit.mean;
            s += &c * c.transpose();
        }
        m /= n as f64;
        s /= n as f64;
        assert!((m - &fit.mean).amax() < 0.02);
        assert!((s - cov).amax() < 0.03);
    }

    #[test]
    fn mahalanobis_matches_inverse() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let fit = GaussianFit::from_covariance(DVector::zeros(2), &cov).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.2]);
        let direct = (x.transpose() * cov.try_inverse().unwrap() * &x)[(0, 0)];
        assert!((fit.mahalanobis(&x) - direct).abs() < 1e-12);
    }
}
