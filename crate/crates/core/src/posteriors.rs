//! Log kernels of the quasi- and pseudo-posteriors and the smoothness prior.

use nalgebra::{Cholesky, DMatrix};

use crate::design::LpDesign;
use crate::error::{Error, Result};
use crate::estimators::{LteGeometry, ThetaMatrix};
use crate::linalg::{kron, quad_form, spd_inverse};

/// `(H−1)×(H+1)` second-difference operator.
pub fn second_difference_matrix(horizon: usize) -> Result<DMatrix<f64>> {
    if horizon < 2 {
        return Err(Error::InvalidArgument(format!(
            "second differences need H >= 2, got {horizon}"
        )));
    }
    let mut d = DMatrix::zeros(horizon - 1, horizon + 1);
    for r in 0..horizon - 1 {
        d[(r, r)] = 1.0;
        d[(r, r + 1)] = -2.0;
        d[(r, r + 2)] = 1.0;
    }
    Ok(d)
}

/// Gaussian roughness penalty on each regressor's coefficient path, with
/// half-Cauchy(0, κ) scales represented through an inverse-gamma mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessPenalty {
    pub kappa: f64,
    pub tau: Vec<f64>,
    pub tau_tilde: Vec<f64>,
    pub d2: DMatrix<f64>,
    dtd: DMatrix<f64>,
}

impl RoughnessPenalty {
    /// Starts with every τ_j = τ̃_j = 1.
    pub fn new(kappa: f64, n_regressors: usize, horizon: usize) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
        }
        let d2 = second_difference_matrix(horizon)?;
        let dtd = d2.transpose() * &d2;
        Ok(Self {
            kappa,
            tau: vec![1.0; n_regressors],
            tau_tilde: vec![1.0; n_regressors],
            d2,
            dtd,
        })
    }

    pub fn n_regressors(&self) -> usize {
        self.tau.len()
    }

    pub fn n_horizons(&self) -> usize {
        self.dtd.nrows()
    }

    /// `DᵀD`, (H+1)×(H+1).
    pub fn dtd(&self) -> &DMatrix<f64> {
        &self.dtd
    }

    /// `Q_τ = DᵀD ⊗ diag(τ⁻¹)`, matching the horizon-major θ layout.
    pub fn precision(&self) -> DMatrix<f64> {
        let inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.tau.len(),
            self.tau.iter().map(|t| 1.0 / t),
        ));
        kron(&self.dtd, &inv)
    }

    /// `θ_jᵀDᵀDθ_j` for regressor `j`.
    pub fn roughness(&self, theta: &[f64], j: usize) -> f64 {
        let jn = self.n_regressors();
        let path = nalgebra::DVector::from_iterator(
            self.n_horizons(),
            (0..self.n_horizons()).map(|h| theta[h * jn + j]),
        );
        quad_form(&self.dtd, &path)
    }

    /// `θᵀQ_τθ`.
    pub fn quad_form(&self, theta: &[f64]) -> f64 {
        (0..self.n_regressors())
            .map(|j| self.roughness(theta, j) / self.tau[j])
            .sum()
    }

    /// `aᵀQ_τb` without forming Q_τ.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        let qb = self.apply(b);
        a.iter().zip(&qb).map(|(x, y)| x * y).sum()
    }

    /// `Q_τθ` without forming Q_τ.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        let jn = self.n_regressors();
        let nh = self.n_horizons();
        let mut out = vec![0.0; theta.len()];
        for h in 0..nh {
            for hp in 0..nh {
                let w = self.dtd[(h, hp)];
                if w == 0.0 {
                    continue;
                }
                for j in 0..jn {
                    out[h * jn + j] += w * theta[hp * jn + j] / self.tau[j];
                }
            }
        }
        out
    }

    /// Adds `Q_τ` to a D×D matrix in place.
    pub fn add_precision_to(&self, m: &mut DMatrix<f64>) {
        let jn = self.n_regressors();
        let nh = self.n_horizons();
        for h in 0..nh {
            for hp in 0..nh {
                let w = self.dtd[(h, hp)];
                if w == 0.0 {
                    continue;
                }
                for j in 0..jn {
                    m[(h * jn + j, hp * jn + j)] += w / self.tau[j];
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Flat,
    RoughnessPenalty(RoughnessPenalty),
}

impl PriorSpec {
    pub fn roughness(kappa: f64, n_regressors: usize, horizon: usize) -> Result<Self> {
        Ok(PriorSpec::RoughnessPenalty(RoughnessPenalty::new(kappa, n_regressors, horizon)?))
    }

    /// Log prior kernel of θ at the current hyperparameters.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            PriorSpec::Flat => 0.0,
            PriorSpec::RoughnessPenalty(rp) => -0.5 * rp.quad_form(theta),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, PriorSpec::Flat)
    }
}

fn check_finite(theta: &[f64]) -> Result<()> {
    if theta.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("theta has non-finite entries".into()))
    }
}

/// `−(T/2)·m̄(θ)ᵀW m̄(θ) + log p(θ)`.
pub fn log_quasi_posterior(theta: &[f64], geom: &LteGeometry, prior: &PriorSpec) -> Result<f64> {
    if theta.len() != geom.n_params() {
        return Err(Error::Dimension(format!(
            "theta has {} entries, geometry has {}",
            theta.len(),
            geom.n_params()
        )));
    }
    check_finite(theta)?;
    let m = geom.moment_mean(theta);
    Ok(-0.5 * geom.t_eff as f64 * quad_form(&geom.w, &m) + prior.log_density(theta))
}

/// SUR pseudo-posterior kernel with a flat prior on θ and Jeffreys prior on Σ.
pub fn log_pseudo_posterior(theta: &[f64], sigma: &DMatrix<f64>, design: &LpDesign) -> Result<f64> {
    check_finite(theta)?;
    let th = ThetaMatrix::from_vec(design.n_regressors(), design.n_horizons(), theta)?;
    let nh = design.n_horizons();
    if sigma.shape() != (nh, nh) {
        return Err(Error::Dimension(format!("Sigma must be {nh}×{nh}")));
    }
    let chol = Cholesky::new(sigma.clone()).ok_or(Error::NotPositiveDefinite("Sigma"))?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let resid = &design.y - &design.x * th.matrix();
    let s = resid.transpose() * &resid;
    let trace = (chol.inverse() * s).trace();
    let t = design.t_eff() as f64;
    let jeffreys = -0.5 * (nh as f64 + 1.0) * log_det;
    Ok(-0.5 * t * log_det - 0.5 * trace + jeffreys)
}

/// `Ω(θ*) = (GᵀWG)⁻¹/T`, the covariance treated as a likelihood by the AGS.
pub fn ags_model_covariance(geom: &LteGeometry) -> Result<DMatrix<f64>> {
    spd_inverse(&geom.precision, "T·GᵀWG")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{asymptotic_covariance, lte_geometry, ols, MomentCovKind};
    use crate::testutil::random_design;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn stencil_for_h3() {
        let d = second_difference_matrix(3).unwrap();
        let expect = DMatrix::from_row_slice(2, 4, &[1., -2., 1., 0., 0., 1., -2., 1.]);
        assert_eq!(d, expect);
        assert!(second_difference_matrix(1).is_err());
    }

    #[test]
    fn stencil_kills_lines_and_doubles_squares() {
        let d = second_difference_matrix(7).unwrap();
        let line = DVector::from_fn(8, |h, _| 2.5 - 0.75 * h as f64);
        assert!((&d * line).iter().all(|&v| v == 0.0));
        let sq = DVector::from_fn(8, |h, _| (h * h) as f64);
        assert!((&d * sq).iter().all(|&v| v == 2.0));
    }

    #[test]
    fn kronecker_ordering_by_hand() {
        // J = 2, H = 2: only regressor 1 has a curved path, τ_1 = 4
        let mut rp = RoughnessPenalty::new(1.0, 2, 2).unwrap();
        rp.tau = vec![1.0, 4.0];
        // θ laid out as (h0: j0, j1), (h1: j0, j1), (h2: j0, j1)
        let theta = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        // second difference of (1, 0, 1) is 2, squared 4, divided by τ_1
        assert!((rp.quad_form(&theta) - 1.0).abs() < 1e-15);
        let q = rp.precision();
        let v = DVector::from_column_slice(&theta);
        assert!((quad_form(&q, &v) - 1.0).abs() < 1e-15);
        let applied = DVector::from_vec(rp.apply(&theta));
        assert!((applied - &q * &v).amax() < 1e-15);
        let mut z = DMatrix::zeros(6, 6);
        rp.add_precision_to(&mut z);
        assert_eq!(z, q);
    }

    #[test]
    fn penalty_ignores_linear_trends() {
        let mut rp = RoughnessPenalty::new(1.0, 3, 5).unwrap();
        rp.tau = vec![0.5, 2.0, 7.0];
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let theta: Vec<f64> = (0..18).map(|_| rng.random::<f64>()).collect();
        let mut shifted = theta.clone();
        for h in 0..6 {
            for j in 0..3 {
                shifted[h * 3 + j] += (j as f64 + 1.0) - 0.3 * j as f64 * h as f64;
            }
        }
        assert!((rp.quad_form(&theta) - rp.quad_form(&shifted)).abs() < 1e-10);
    }

    #[test]
    fn quasi_posterior_is_exact_quadratic() {
        let d = random_design(21, 120, 3, 2);
        let geom = lte_geometry(&d, MomentCovKind::Standard, false).unwrap();
        let star = geom.theta_star.vec();
        let at_star = log_quasi_posterior(star.as_slice(), &geom, &PriorSpec::Flat).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let delta = DVector::from_fn(9, |_, _| rng.random::<f64>() - 0.5) * 0.1;
            let th = &star + &delta;
            let lp = log_quasi_posterior(th.as_slice(), &geom, &PriorSpec::Flat).unwrap();
            let expect = at_star - 0.5 * quad_form(&geom.precision, &delta);
            assert!(lp <= at_star + 1e-9);
            assert!((lp - expect).abs() < 1e-8 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn vanishing_penalty_recovers_flat() {
        let d = random_design(22, 120, 3, 3);
        let geom = lte_geometry(&d, MomentCovKind::Standard, false).unwrap();
        let mut rp = RoughnessPenalty::new(1.0, 3, 3).unwrap();
        rp.tau = vec![1e14; 3];
        let th: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
        let flat = log_quasi_posterior(&th, &geom, &PriorSpec::Flat).unwrap();
        let pen = log_quasi_posterior(&th, &geom, &PriorSpec::RoughnessPenalty(rp)).unwrap();
        assert!((flat - pen).abs() < 1e-10);
    }

    #[test]
    fn pseudo_kernel_scalar_case() {
        let d = random_design(23, 30, 2, 0);
        let th = [0.2, -0.1];
        let s2 = 1.7;
        let sigma = DMatrix::from_element(1, 1, s2);
        let got = log_pseudo_posterior(&th, &sigma, &d).unwrap();
        let mut rss = 0.0;
        for t in 0..30 {
            let r = d.y[(t, 0)] - th[0] * d.x[(t, 0)] - th[1] * d.x[(t, 1)];
            rss += r * r;
        }
        let expect = -15.0 * s2.ln() - rss / (2.0 * s2) - s2.ln();
        assert!((got - expect).abs() < 1e-10);
    }

    #[test]
    fn pseudo_kernel_stationary_at_ols() {
        let d = random_design(24, 80, 3, 1);
        let est = ols(&d).unwrap();
        let resid = &d.y - &d.x * est.matrix();
        let sigma = resid.transpose() * &resid / 80.0;
        let th = est.vec();
        let eps = 1e-6;
        for i in 0..th.len() {
            let mut up = th.clone();
            up[i] += eps;
            let mut dn = th.clone();
            dn[i] -= eps;
            let g = (log_pseudo_posterior(up.as_slice(), &sigma, &d).unwrap()
                - log_pseudo_posterior(dn.as_slice(), &sigma, &d).unwrap())
                / (2.0 * eps);
            assert!(g.abs() < 1e-5, "gradient {g} at {i}");
        }
    }

    #[test]
    fn pseudo_kernel_rescales_with_jeffreys_invariance() {
        let d = random_design(25, 60, 2, 1);
        let c: f64 = 3.0;
        let mut scaled = d.clone();
        scaled.y *= c;
        let th = [0.1, 0.4, -0.2, 0.3];
        let th_c: Vec<f64> = th.iter().map(|v| v * c).collect();
        let sigma = DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8]);
        let a = log_pseudo_posterior(&th, &sigma, &d).unwrap();
        let b = log_pseudo_posterior(&th_c, &(&sigma * c * c), &scaled).unwrap();
        // |c²Σ| = c⁴|Σ| picks up (T + H + 2)/2 · 4 log c
        let shift = (60.0 + 3.0) / 2.0 * 4.0 * c.ln();
        assert!((a - b - shift).abs() < 1e-9);
    }

    #[test]
    fn ags_covariance_properties() {
        let d = random_design(26, 200, 3, 2);
        let geom = lte_geometry(&d, MomentCovKind::Standard, false).unwrap();
        let omega = ags_model_covariance(&geom).unwrap();
        let asym = asymptotic_covariance(&geom).unwrap() / 200.0;
        assert!((&omega - &asym).norm() / omega.norm() < 1e-8);
        assert!(Cholesky::new(omega.clone()).is_some());
        let mut doubled = geom.clone();
        doubled.t_eff *= 2;
        doubled.precision *= 2.0;
        let half = ags_model_covariance(&doubled).unwrap();
        assert!((half * 2.0 - omega).abs().max() < 1e-12);
    }
}
