//! Generalized elliptical slice sampling with a random-walk fallback.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::estimators::LteGeometry;
use crate::posteriors::{PriorSpec, RoughnessPenalty};

use super::hyper::update_hyperparameters;
use super::mvn::GaussianFit;
use super::{AcceptStats, ChainConfig, DrawBuffer, ThetaDraws};

/// Result of a single GESS transition.
#[derive(Debug, Clone)]
pub struct GessOutcome {
    pub theta: DVector<f64>,
    /// Rejected slice proposals before acceptance (or before giving up).
    pub shrinks: u64,
    /// `Some(accepted)` when the MH fallback ran.
    pub fallback: Option<bool>,
}

fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (0, 1]
    1.0 - rng.random::<f64>()
}

/// Angle search on the ellipse. `log_ell(ζ)` is the log "likelihood" ratio of
/// the point at angle ζ. Returns the accepted angle, or `None` after
/// `limit` rejections.
fn slice_search<R: Rng + ?Sized>(
    rng: &mut R,
    log_ell_now: f64,
    limit: usize,
    mut log_ell: impl FnMut(f64) -> f64,
) -> (Option<f64>, u64) {
    if limit == 0 {
        return (None, 0);
    }
    let log_y = log_ell_now + uniform_open(rng).ln();
    let mut zeta = 2.0 * PI * rng.random::<f64>();
    let (mut lo, mut hi) = (zeta - 2.0 * PI, zeta);
    let mut shrinks = 0u64;
    loop {
        if log_ell(zeta) > log_y {
            return (Some(zeta), shrinks);
        }
        shrinks += 1;
        if shrinks as usize >= limit {
            return (None, shrinks);
        }
        if zeta < 0.0 {
            lo = zeta;
        } else {
            hi = zeta;
        }
        zeta = lo + (hi - lo) * rng.random::<f64>();
    }
}

fn on_ellipse(mu: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>, zeta: f64) -> DVector<f64> {
    a * zeta.cos() + b * zeta.sin() + mu
}

/// Random-walk Metropolis step with proposal `N(θ, scale·Υ)`.
fn mh_step<R: Rng + ?Sized>(
    rng: &mut R,
    theta: &DVector<f64>,
    log_q_now: f64,
    fit: &GaussianFit,
    scale: f64,
    mut log_q: impl FnMut(&DVector<f64>) -> f64,
) -> (DVector<f64>, bool) {
    let prop = theta + fit.sample_centered(rng) * scale.sqrt();
    let lq = log_q(&prop);
    if lq.is_finite() && uniform_open(rng).ln() < lq - log_q_now {
        (prop, true)
    } else {
        (theta.clone(), false)
    }
}

/// One GESS transition for an arbitrary log target.
///
/// The Gaussian `N(μ, Υ)` in `fit` plays the role of the prior; the slice is
/// taken on `log_target(θ) + ½(θ−μ)ᵀΥ⁻¹(θ−μ)`.
pub fn gess_step<R, F>(
    theta: &DVector<f64>,
    fit: &GaussianFit,
    mut log_target: F,
    rng: &mut R,
    cfg: &ChainConfig,
) -> GessOutcome
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<f64>) -> f64,
{
    let mu = &fit.mean;
    let nu = fit.sample(rng);
    let a = theta - mu;
    let b = &nu - mu;
    let lq_now = log_target(theta);
    let log_ell_now = lq_now + 0.5 * fit.mahalanobis(theta);
    let (zeta, shrinks) = slice_search(rng, log_ell_now, cfg.shrink_limit, |z| {
        let p = on_ellipse(mu, &a, &b, z);
        log_target(&p) + 0.5 * fit.mahalanobis(&p)
    });
    match zeta {
        Some(z) => GessOutcome { theta: on_ellipse(mu, &a, &b, z), shrinks, fallback: None },
        None => {
            let scale = cfg.mh_scale_for(theta.len());
            let (next, ok) = mh_step(rng, theta, lq_now, fit, scale, log_target);
            GessOutcome { theta: next, shrinks, fallback: Some(ok) }
        }
    }
}

/// Closed form of the log ratio target/N(θ*, Υ) for the quasi-posterior.
///
/// With linear moments and `Υ⁻¹ = T·GᵀWG`, the ratio at `θ* + x` is
/// `gᵀx − ½xᵀQ_τx + const`, so every point on an ellipse costs O(1) once a
/// handful of inner products are known.
struct RatioModel {
    /// `−T·GᵀW m̄(θ*)`.
    g_lik: DVector<f64>,
    /// `g_lik − Q_τθ*`.
    g: DVector<f64>,
}

impl RatioModel {
    fn new(geom: &LteGeometry, mu: &DVector<f64>) -> Self {
        let m0 = geom.moment_mean(mu.as_slice());
        let g_lik = -(geom.g.transpose() * (&geom.w * m0)) * geom.t_eff as f64;
        Self { g: g_lik.clone(), g_lik }
    }

    fn refresh(&mut self, prior: Option<&RoughnessPenalty>, mu: &DVector<f64>) {
        self.g = self.g_lik.clone();
        if let Some(rp) = prior {
            for (gi, qi) in self.g.iter_mut().zip(rp.apply(mu.as_slice())) {
                *gi -= qi;
            }
        }
    }

    fn log_ratio(&self, prior: Option<&RoughnessPenalty>, x: &DVector<f64>) -> f64 {
        let pen = prior.map_or(0.0, |rp| rp.quad_form(x.as_slice()));
        self.g.dot(x) - 0.5 * pen
    }
}

/// GESS on the quasi-posterior, with Gibbs updates of the smoothness scales
/// when the prior is a roughness penalty.
///
/// The Gaussian is centred at θ* with covariance `(T·GᵀWG)⁻¹`; the chain
/// starts at θ*.
pub fn run_gess(geom: &LteGeometry, prior: &PriorSpec, cfg: &ChainConfig) -> Result<ThetaDraws> {
    cfg.validate()?;
    let dim = geom.n_params();
    let mut prior = match prior {
        PriorSpec::Flat => None,
        PriorSpec::RoughnessPenalty(rp) => {
            if rp.n_regressors() * rp.n_horizons() != dim {
                return Err(Error::Dimension("prior does not match the geometry".into()));
            }
            Some(rp.clone())
        }
    };
    let mu = geom.theta_star.vec();
    let fit = GaussianFit::from_precision(mu.clone(), &geom.precision)?;
    let scale = cfg.mh_scale_for(dim);
    let mut model = RatioModel::new(geom, &mu);
    model.refresh(prior.as_ref(), &mu);

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut buf = DrawBuffer::new(cfg, dim)?;
    let mut stats = AcceptStats::default();
    let mut x = DVector::zeros(dim); // θ − μ
    let start = Instant::now();

    for it in 0..cfg.n_iter {
        let b = fit.sample_centered(&mut rng);
        let rp = prior.as_ref();
        let ga = model.g.dot(&x);
        let gb = model.g.dot(&b);
        let (aqa, aqb, bqb) = match rp {
            Some(rp) => {
                let qb = rp.apply(b.as_slice());
                let aqb: f64 = x.iter().zip(&qb).map(|(u, v)| u * v).sum();
                let bqb: f64 = b.iter().zip(&qb).map(|(u, v)| u * v).sum();
                (rp.quad_form(x.as_slice()), aqb, bqb)
            }
            None => (0.0, 0.0, 0.0),
        };
        let now = ga - 0.5 * aqa;
        let (zeta, shrinks) = slice_search(&mut rng, now, cfg.shrink_limit, |z| {
            let (c, s) = (z.cos(), z.sin());
            c * ga + s * gb - 0.5 * (c * c * aqa + 2.0 * c * s * aqb + s * s * bqb)
        });
        stats.shrinks += shrinks;
        match zeta {
            Some(z) => {
                stats.slice_accepts += 1;
                if shrinks == 0 {
                    stats.first_try += 1;
                }
                x = &x * z.cos() + &b * z.sin();
            }
            None => {
                stats.mh_fallbacks += 1;
                let quad = |v: &DVector<f64>| {
                    let l = fit.precision_factor().tr_mul(v);
                    l.norm_squared()
                };
                let lq_now = now - 0.5 * quad(&x);
                let (next, ok) = mh_step(&mut rng, &x, lq_now, &fit, scale, |v| {
                    model.log_ratio(rp, v) - 0.5 * quad(v)
                });
                if ok {
                    stats.mh_accepts += 1;
                }
                x = next;
            }
        }

        if let Some(rp) = prior.as_mut() {
            let theta = &x + &mu;
            update_hyperparameters(rp, theta.as_slice(), cfg.tau_shape, &mut rng);
            model.refresh(Some(rp), &mu);
        }
        if it >= cfg.burn_in {
            let theta = &x + &mu;
            buf.push(theta.as_slice())?;
        }
    }
    Ok(buf.finish(stats, cfg, start.elapsed()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{lte_geometry, MomentCovKind};
    use crate::posteriors::log_quasi_posterior;
    use crate::testutil::random_design;
    use nalgebra::DMatrix;

    fn gaussian(dim: usize) -> GaussianFit {
        let cov = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 + i as f64 } else { 0.3 });
        GaussianFit::from_covariance(DVector::from_fn(dim, |i, _| i as f64), &cov).unwrap()
    }

    #[test]
    fn prior_equal_to_target_always_accepts_first() {
        let fit = gaussian(3);
        let cfg = ChainConfig::new(10, 0, 0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut theta = fit.mean.clone();
        for _ in 0..10_000 {
            let out = gess_step(&theta, &fit, |t| -0.5 * fit.mahalanobis(t), &mut rng, &cfg);
            assert_eq!(out.shrinks, 0);
            assert!(out.fallback.is_none());
            theta = out.theta;
        }
    }

    #[test]
    fn zero_angle_is_identity() {
        let mu = DVector::from_vec(vec![1.0, 2.0]);
        let a = DVector::from_vec(vec![0.5, -0.5]);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(on_ellipse(&mu, &a, &b, 0.0), &a + &mu);
    }

    #[test]
    fn narrower_gaussian_target() {
        // target N(μ, Υ/4) with the wider N(μ, Υ) as the slice prior
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let mu = DVector::from_vec(vec![0.5, -1.0]);
        let fit = GaussianFit::from_covariance(mu.clone(), &cov).unwrap();
        let cfg = ChainConfig::new(10, 0, 0);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut theta = mu.clone();
        let n = 200_000;
        let mut sum = DVector::zeros(2);
        let mut outer = DMatrix::zeros(2, 2);
        let mut chain0 = Vec::with_capacity(n);
        for _ in 0..n {
            theta = gess_step(&theta, &fit, |t| -2.0 * fit.mahalanobis(t), &mut rng, &cfg).theta;
            let d = &theta - &mu;
            sum += &d;
            outer += &d * d.transpose();
            chain0.push(theta[0]);
        }
        let mean = sum / n as f64;
        let covhat = outer / n as f64 - &mean * mean.transpose();
        let target = &cov / 4.0;
        let ess = crate::samplers::effective_sample_size(&chain0);
        let se = (target[(0, 0)] / ess).sqrt();
        assert!(mean[0].abs() < 3.0 * se);
        assert!(((&covhat - &target).norm() / target.norm()) < 0.05);
    }

    #[test]
    fn closed_form_ratio_matches_direct_evaluation() {
        let d = random_design(31, 150, 3, 3);
        let geom = lte_geometry(&d, MomentCovKind::Standard, false).unwrap();
        let mut rp = RoughnessPenalty::new(10.0, 3, 3).unwrap();
        rp.tau = vec![0.3, 2.0, 5.0];
        let prior = PriorSpec::RoughnessPenalty(rp.clone());
        let mu = geom.theta_star.vec();
        let fit = GaussianFit::from_precision(mu.clone(), &geom.precision).unwrap();
        let mut model = RatioModel::new(&geom, &mu);
        model.refresh(Some(&rp), &mu);
        let direct = |x: &DVector<f64>| {
            let th = x + &mu;
            log_quasi_posterior(th.as_slice(), &geom, &prior).unwrap() + 0.5 * fit.mahalanobis(&th)
        };
        let base = direct(&DVector::zeros(12)) - model.log_ratio(Some(&rp), &DVector::zeros(12));
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x = fit.sample_centered(&mut rng) * 3.0;
            let fast = model.log_ratio(Some(&rp), &x) + base;
            let slow = direct(&x);
            assert!((fast - slow).abs() < 1e-7 * (1.0 + slow.abs()), "{fast} {slow}");
        }
    }
}
