//! Approximate Gibbs sampler: the LTE's normal approximation as a likelihood.

use std::time::Instant;

use nalgebra::{Cholesky, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::estimators::LteGeometry;
use crate::posteriors::PriorSpec;

use super::hyper::update_hyperparameters;
use super::mvn::{solve_upper_from_lower, standard_normal_vec, GaussianFit};
use super::{AcceptStats, ChainConfig, DrawBuffer, ThetaDraws};

/// Alternates `θ | τ ~ N((Ω⁻¹+Q_τ)⁻¹Ω⁻¹θ*, (Ω⁻¹+Q_τ)⁻¹)` with the scale updates.
///
/// Under a flat prior every draw is an independent `N(θ*, Ω)`.
pub fn run_ags(geom: &LteGeometry, prior: &PriorSpec, cfg: &ChainConfig) -> Result<ThetaDraws> {
    run(geom, prior, cfg, true)
}

/// As [`run_ags`] but with the smoothness scales held at their given values.
pub fn run_ags_fixed_scales(
    geom: &LteGeometry,
    prior: &PriorSpec,
    cfg: &ChainConfig,
) -> Result<ThetaDraws> {
    run(geom, prior, cfg, false)
}

fn run(geom: &LteGeometry, prior: &PriorSpec, cfg: &ChainConfig, update: bool) -> Result<ThetaDraws> {
    cfg.validate()?;
    let dim = geom.n_params();
    let star = geom.theta_star.vec();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut buf = DrawBuffer::new(cfg, dim)?;
    let start = Instant::now();

    match prior {
        PriorSpec::Flat => {
            let fit = GaussianFit::from_precision(star, &geom.precision)?;
            for it in 0..cfg.n_iter {
                let draw = fit.sample(&mut rng);
                if it >= cfg.burn_in {
                    buf.push(draw.as_slice())?;
                }
            }
        }
        PriorSpec::RoughnessPenalty(rp) => {
            if rp.n_regressors() * rp.n_horizons() != dim {
                return Err(Error::Dimension("prior does not match the geometry".into()));
            }
            let mut rp = rp.clone();
            let rhs = &geom.precision * &star;
            for it in 0..cfg.n_iter {
                let mut p = geom.precision.clone();
                rp.add_precision_to(&mut p);
                let chol = Cholesky::new(p)
                    .ok_or(Error::NotPositiveDefinite("conditional precision of theta"))?;
                let mean = chol.solve(&rhs);
                let l = chol.l();
                let draw: DVector<f64> =
                    solve_upper_from_lower(&l, standard_normal_vec(&mut rng, dim)) + mean;
                if update {
                    update_hyperparameters(&mut rp, draw.as_slice(), cfg.tau_shape, &mut rng);
                }
                if it >= cfg.burn_in {
                    buf.push(draw.as_slice())?;
                }
            }
        }
    }
    Ok(buf.finish(AcceptStats::default(), cfg, start.elapsed()))
}
