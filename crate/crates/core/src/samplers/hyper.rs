//! Conditional updates of the half-Cauchy scale mixture.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::posteriors::RoughnessPenalty;

use super::TauShape;

/// `IG(shape, rate)` as `rate / Gamma(shape, 1)`.
pub fn draw_inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0)
        .expect("inverse-gamma shape must be positive")
        .sample(rng);
    rate / g
}

/// One sweep of τ_j | θ, τ̃_j followed by τ̃_j | τ_j for every regressor.
pub fn update_hyperparameters<R: Rng + ?Sized>(
    prior: &mut RoughnessPenalty,
    theta: &[f64],
    shape: TauShape,
    rng: &mut R,
) {
    let a = shape.shape(prior.n_horizons() - 1);
    let inv_k2 = 1.0 / (prior.kappa * prior.kappa);
    for j in 0..prior.n_regressors() {
        let rate = 1.0 / prior.tau_tilde[j] + 0.5 * prior.roughness(theta, j);
        prior.tau[j] = draw_inverse_gamma(rng, a, rate);
        prior.tau_tilde[j] = draw_inverse_gamma(rng, 1.0, inv_k2 + 1.0 / prior.tau[j]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_one_sample, mean};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn half_cauchy_cdf(kappa: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| 2.0 / std::f64::consts::PI * (x / kappa).atan()
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..200_000).map(|_| draw_inverse_gamma(&mut rng, 5.0, 2.0)).collect();
        assert!((mean(&xs) - 0.5).abs() < 0.01);
    }

    #[test]
    fn mixture_gives_half_cauchy_scale() {
        let kappa = 100.0;
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| {
                let tt = draw_inverse_gamma(&mut rng, 0.5, 1.0 / (kappa * kappa));
                draw_inverse_gamma(&mut rng, 0.5, 1.0 / tt).sqrt()
            })
            .collect();
        assert!(ks_one_sample(&draws, half_cauchy_cdf(kappa)) < 0.02);
    }

    #[test]
    fn gibbs_on_scales_alone_targets_half_cauchy() {
        // the τ conditionals with the θ contribution removed
        let kappa = 100.0;
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mut tt = 1.0f64;
        let mut draws = Vec::with_capacity(100_000);
        for it in 0..1_001_000 {
            let tau = draw_inverse_gamma(&mut rng, 0.5, 1.0 / tt);
            tt = draw_inverse_gamma(&mut rng, 1.0, 1.0 / (kappa * kappa) + 1.0 / tau);
            if it >= 1000 && it % 10 == 0 {
                draws.push(tau.sqrt());
            }
        }
        assert!(ks_one_sample(&draws, half_cauchy_cdf(kappa)) < 0.02);
    }
}
