//! Gibbs sampler for the SUR pseudo-posterior.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::design::LpDesign;
use crate::error::{Error, Result};
use crate::estimators::ols;
use crate::linalg::{kron, spd_inverse, symmetrize};
use crate::posteriors::PriorSpec;

use super::hyper::update_hyperparameters;
use super::mvn::{solve_upper_from_lower, standard_normal_vec};
use super::{AcceptStats, ChainConfig, DrawBuffer, ThetaDraws};

/// θ draws plus the matching Σ draws, each Σ flattened column-major into a row.
#[derive(Debug, Clone)]
pub struct PseudoDraws {
    pub theta: ThetaDraws,
    pub sigma: DMatrix<f64>,
}

/// Inverse-Wishart draw with `df` degrees of freedom and scale `scale`
/// (mean `scale / (df − p − 1)`), via the Bartlett decomposition.
pub fn inverse_wishart<R: Rng + ?Sized>(rng: &mut R, df: f64, scale: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if !(df > p as f64 - 1.0) {
        return Err(Error::InvalidArgument(format!("inverse Wishart needs df > {}", p - 1)));
    }
    let c = Cholesky::new(scale.clone())
        .ok_or(Error::NotPositiveDefinite("inverse Wishart scale"))?
        .l();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).expect("positive degrees of freedom");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    // Σ = (C A⁻ᵀ)(C A⁻ᵀ)ᵀ; A Mᵀ = Cᵀ gives Mᵀ
    let mut mt = c.transpose();
    if !a.solve_lower_triangular_mut(&mut mt) {
        return Err(Error::Sampler("singular Bartlett factor".into()));
    }
    let mut sigma = mt.transpose() * mt;
    symmetrize(&mut sigma);
    Ok(sigma)
}

/// Alternates `Σ | θ ~ IW(T, RᵀR)` and `θ | Σ ~ N(P⁻¹b, P⁻¹)`, with
/// `P = Σ⁻¹ ⊗ XᵀX (+ Q_τ)` and `b = vec(XᵀYΣ⁻¹)`. Starts from OLS.
pub fn run_pseudo_gibbs(design: &LpDesign, prior: &PriorSpec, cfg: &ChainConfig) -> Result<PseudoDraws> {
    cfg.validate()?;
    let (t, j, nh) = (design.t_eff(), design.n_regressors(), design.n_horizons());
    if t <= nh + j {
        return Err(Error::Data(format!(
            "effective sample {t} must exceed H + 1 + J = {}",
            nh + j
        )));
    }
    let dim = j * nh;
    let anchor = ols(design)?;
    let xtx = design.x.transpose() * &design.x;
    let xty = design.x.transpose() * &design.y;
    let xtx_inv = spd_inverse(&xtx, "XᵀX")?;
    let a_fac = Cholesky::new(xtx_inv).ok_or(Error::NotPositiveDefinite("(XᵀX)⁻¹"))?.l();
    let mut rp = match prior {
        PriorSpec::Flat => None,
        PriorSpec::RoughnessPenalty(rp) => {
            if rp.n_regressors() != j || rp.n_horizons() != nh {
                return Err(Error::Dimension("prior does not match the design".into()));
            }
            Some(rp.clone())
        }
    };

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut buf = DrawBuffer::new(cfg, dim)?;
    let mut sigma_rows = Vec::with_capacity(cfg.n_kept() * nh * nh);
    let mut theta = anchor.matrix().clone();
    let start = Instant::now();

    for it in 0..cfg.n_iter {
        let resid = &design.y - &design.x * &theta;
        let mut s = resid.transpose() * resid;
        symmetrize(&mut s);
        let sigma = inverse_wishart(&mut rng, t as f64, &s)?;

        theta = match rp.as_ref() {
            None => {
                // vec(Θ̂ + A Z Bᵀ) ~ N(vec Θ̂, Σ ⊗ (XᵀX)⁻¹)
                let b = Cholesky::new(sigma.clone()).ok_or(Error::NotPositiveDefinite("Sigma"))?.l();
                let z = DMatrix::from_fn(j, nh, |_, _| rng.sample::<f64, _>(StandardNormal));
                anchor.matrix() + &a_fac * z * b.transpose()
            }
            Some(rp) => {
                let sigma_inv = spd_inverse(&sigma, "Sigma")?;
                let mut p = kron(&sigma_inv, &xtx);
                rp.add_precision_to(&mut p);
                let rhs = &xty * &sigma_inv;
                let rhs = DVector::from_column_slice(rhs.as_slice());
                let chol = Cholesky::new(p).ok_or(Error::NotPositiveDefinite("conditional precision of theta"))?;
                let mean = chol.solve(&rhs);
                let draw = solve_upper_from_lower(&chol.l(), standard_normal_vec(&mut rng, dim)) + mean;
                DMatrix::from_column_slice(j, nh, draw.as_slice())
            }
        };

        if let Some(rp) = rp.as_mut() {
            update_hyperparameters(rp, theta.as_slice(), cfg.tau_shape, &mut rng);
        }
        if it >= cfg.burn_in {
            buf.push(theta.as_slice())?;
            sigma_rows.extend_from_slice(sigma.as_slice());
        }
    }
    let theta = buf.finish(AcceptStats::default(), cfg, start.elapsed());
    let sigma = DMatrix::from_row_slice(theta.n_draws(), nh * nh, &sigma_rows);
    Ok(PseudoDraws { theta, sigma })
}
