//! Library results checked against independent computations.

use nalgebra::{DMatrix, DVector};
use qblp::dgp::{build_vma, simulate, true_irf};
use qblp::estimators::{lte_geometry, ols, MomentCovKind};
use qblp::posteriors::PriorSpec;
use qblp::samplers::{effective_sample_size, run_ags, run_gess, ChainConfig};
use qblp::stats::{ks_two_sample, mean, variance};
use qblp::{build_design, DesignConfig, LpDesign, SpecKind, VmaMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn two_regressor_design(seed: u64, t: usize) -> LpDesign {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(t, 2, |_, c| if c == 1 { 1.0 } else { rng.sample(StandardNormal) });
    let y = DMatrix::from_fn(t, 2, |i, h| {
        let e: f64 = rng.sample(StandardNormal);
        0.5 * x[(i, 0)] - 0.2 * h as f64 + (1.0 + x[(i, 0)].abs()) * e
    });
    LpDesign {
        y,
        x,
        z: None,
        horizon: 1,
        lags: 1,
        spec: SpecKind::Level,
        x_names: vec!["shock".into(), "const".into()],
        first_row: 0,
    }
}

/// Moment mean written out term by term.
fn brute_moment_mean(d: &LpDesign, theta: &[f64]) -> Vec<f64> {
    let t = d.x.nrows();
    let mut m = vec![0.0; 4];
    for i in 0..t {
        for h in 0..2 {
            let u = d.y[(i, h)] - d.x[(i, 0)] * theta[2 * h] - d.x[(i, 1)] * theta[2 * h + 1];
            m[2 * h] += d.x[(i, 0)] * u / t as f64;
            m[2 * h + 1] += d.x[(i, 1)] * u / t as f64;
        }
    }
    m
}

#[test]
fn gmm_covariance_matches_brute_force() {
    let d = two_regressor_design(11, 60);
    let t = 60.0;
    // OLS from the 2×2 normal equations
    let (mut sxx, mut sxy) = (DMatrix::<f64>::zeros(2, 2), DMatrix::<f64>::zeros(2, 2));
    for i in 0..60 {
        for a in 0..2 {
            for b in 0..2 {
                sxx[(a, b)] += d.x[(i, a)] * d.x[(i, b)];
                sxy[(a, b)] += d.x[(i, a)] * d.y[(i, b)];
            }
        }
    }
    let beta = sxx.clone().try_inverse().unwrap() * sxy;
    let theta: Vec<f64> = vec![beta[(0, 0)], beta[(1, 0)], beta[(0, 1)], beta[(1, 1)]];

    // Jacobian by central differences
    let mut g = DMatrix::zeros(4, 4);
    for k in 0..4 {
        let (mut up, mut dn) = (theta.clone(), theta.clone());
        up[k] += 1e-5;
        dn[k] -= 1e-5;
        let (mu, md) = (brute_moment_mean(&d, &up), brute_moment_mean(&d, &dn));
        for r in 0..4 {
            g[(r, k)] = (mu[r] - md[r]) / 2e-5;
        }
    }
    let mut s = DMatrix::zeros(4, 4);
    for i in 0..60 {
        let mut m = DVector::zeros(4);
        for h in 0..2 {
            let u = d.y[(i, h)] - d.x[(i, 0)] * theta[2 * h] - d.x[(i, 1)] * theta[2 * h + 1];
            m[2 * h] = d.x[(i, 0)] * u;
            m[2 * h + 1] = d.x[(i, 1)] * u;
        }
        s += &m * m.transpose() / t;
    }
    let classical = (g.transpose() * s.try_inverse().unwrap() * &g).try_inverse().unwrap() / t;

    let geom = lte_geometry(&d, MomentCovKind::Standard, false).unwrap();
    let lib = geom.precision.clone().try_inverse().unwrap();
    let rel = (&lib - &classical).abs().max() / classical.abs().max();
    assert!(rel < 1e-6, "relative gap {rel}");
    let anchor = geom.theta_star.vec();
    for k in 0..4 {
        assert!((anchor[k] - theta[k]).abs() < 1e-10);
    }
}

#[test]
fn ols_recovers_population_response() {
    let lags = 3;
    let params = build_vma(lags, 3, VmaMode::ShockObserved, 21).unwrap();
    let sim = simulate(&params, 50_000, lags, 22).unwrap();
    let cfg = DesignConfig::new("w2", "w1", lags, lags, SpecKind::Level).controls(&["w3"]);
    let design = build_design(&sim.data, &cfg).unwrap();
    let est = ols(&design).unwrap();
    let geom = lte_geometry(&design, MomentCovKind::Standard, false).unwrap();
    let cov = geom.precision.clone().try_inverse().unwrap();
    let truth = true_irf(lags).unwrap();
    let j = design.n_regressors();
    for h in 0..=lags {
        let se = cov[(h * j, h * j)].sqrt();
        let err = est.path(0)[h] - truth[h];
        assert!(err.abs() < 3.0 * se, "h={h}: error {err} vs se {se}");
    }
}

fn small_geometry() -> qblp::LteGeometry {
    let params = build_vma(3, 3, VmaMode::ShockObserved, 31).unwrap();
    let sim = simulate(&params, 200, 3, 32).unwrap();
    let cfg = DesignConfig::new("w2", "w1", 3, 3, SpecKind::Level).controls(&["w3"]);
    let design = build_design(&sim.data, &cfg).unwrap();
    lte_geometry(&design, MomentCovKind::Standard, false).unwrap()
}

#[test]
fn random_walk_fallback_targets_the_gaussian() {
    let d = two_regressor_design(41, 200);
    let geom = lte_geometry(&d, MomentCovKind::Standard, false).unwrap();
    let cov = geom.precision.clone().try_inverse().unwrap();
    let cfg = ChainConfig { shrink_limit: 0, ..ChainConfig::new(200_000, 20_000, 42) };
    let draws = run_gess(&geom, &PriorSpec::Flat, &cfg).unwrap();
    assert!(draws.accept.mh_fallbacks as usize == cfg.n_iter);
    let star = geom.theta_star.vec();
    for k in 0..4 {
        let col: Vec<f64> = draws.draws.column(k).iter().copied().collect();
        let ess = effective_sample_size(&col);
        let se = (cov[(k, k)] / ess).sqrt();
        assert!((mean(&col) - star[k]).abs() < 4.0 * se);
        assert!((variance(&col) / cov[(k, k)] - 1.0).abs() < 0.15);
    }
}

#[test]
fn flat_prior_ags_is_exact() {
    let geom = small_geometry();
    let cov = geom.precision.clone().try_inverse().unwrap();
    let draws = run_ags(&geom, &PriorSpec::Flat, &ChainConfig::new(20_000, 0, 5)).unwrap();
    let star = geom.theta_star.vec();
    for k in 0..geom.n_params() {
        let col: Vec<f64> = draws.draws.column(k).iter().copied().collect();
        let sd = cov[(k, k)].sqrt();
        assert!((mean(&col) - star[k]).abs() < 4.0 * sd / (20_000f64).sqrt());
        assert!((variance(&col) / cov[(k, k)] - 1.0).abs() < 0.05);
    }
}

#[test]
fn samplers_agree_under_smoothness_prior() {
    let geom = small_geometry();
    let prior = PriorSpec::roughness(1.0, geom.n_regressors(), 3).unwrap();
    let ags = run_ags(&geom, &prior, &ChainConfig::new(12_000, 2_000, 7)).unwrap();
    let gess = run_gess(&geom, &prior, &ChainConfig::new(240_000, 40_000, 8)).unwrap();
    let j = geom.n_regressors();
    for h in 0..4 {
        let a: Vec<f64> = ags.draws.column(h * j).iter().copied().collect();
        let g: Vec<f64> = gess.draws.column(h * j).iter().copied().collect();
        let thin: Vec<f64> = g.iter().step_by(20).copied().collect();
        assert!(ks_two_sample(&a, &thin) < 0.05, "h={h}");
    }
}

#[test]
fn chains_are_reproducible() {
    let geom = small_geometry();
    let prior = PriorSpec::roughness(10.0, geom.n_regressors(), 3).unwrap();
    let cfg = ChainConfig::new(2_000, 500, 9);
    let a = run_gess(&geom, &prior, &cfg).unwrap();
    let b = run_gess(&geom, &prior, &cfg).unwrap();
    assert_eq!(a.draws, b.draws);
    let c = run_gess(&geom, &prior, &ChainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.draws, c.draws);
}
