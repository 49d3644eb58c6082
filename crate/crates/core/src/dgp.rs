//! Vector moving-average data generator with a known impulse response.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesData;
use crate::error::{Error, Result};

/// How the first variable relates to the first structural shock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum VmaMode {
    /// `w₁,t = ε₁,t`.
    ShockObserved,
    /// All entries random; `r` noisy instruments for `ε₁,t`.
    Iv { r: usize, rho: f64, beta: f64 },
}

impl VmaMode {
    pub fn validate(&self) -> Result<()> {
        if let VmaMode::Iv { r, rho, beta } = *self {
            if r == 0 {
                return Err(Error::InvalidArgument("at least one instrument is required".into()));
            }
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
            }
            if !(beta >= 0.0 && beta.is_finite()) {
                return Err(Error::InvalidArgument(format!("beta must be non-negative, got {beta}")));
            }
        }
        Ok(())
    }

    pub fn n_instruments(&self) -> usize {
        match self {
            VmaMode::ShockObserved => 0,
            VmaMode::Iv { r, .. } => *r,
        }
    }
}

/// Normalization of the hump-shaped response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IrfNormalization {
    /// Denominator summed over `l = 1..L`.
    #[default]
    Printed,
    /// Denominator summed over `l = 0..L`, so the response sums to one.
    Unit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmaParams {
    pub lags: usize,
    pub n_vars: usize,
    /// Γ₀, …, Γ_L.
    pub gammas: Vec<DMatrix<f64>>,
    pub mode: VmaMode,
    pub seed: u64,
}

impl VmaParams {
    /// `γ₂,₁,ₗ` for `l = 0..L`.
    pub fn irf(&self) -> Vec<f64> {
        self.gammas.iter().map(|g| g[(1, 0)]).collect()
    }
}

fn irf_weight(l: usize) -> f64 {
    (l as f64 + 1.0) * (0.5 * (1.0 - l as f64)).exp()
}

pub fn true_irf(lags: usize) -> Result<Vec<f64>> {
    true_irf_with(lags, IrfNormalization::Printed)
}

pub fn true_irf_with(lags: usize, norm: IrfNormalization) -> Result<Vec<f64>> {
    if lags < 1 {
        return Err(Error::InvalidArgument("the response needs at least one lag".into()));
    }
    let start = match norm {
        IrfNormalization::Printed => 1,
        IrfNormalization::Unit => 0,
    };
    let denom: f64 = (start..=lags).map(irf_weight).sum();
    Ok((0..=lags).map(|l| irf_weight(l) / denom).collect())
}

pub fn build_vma(lags: usize, n_vars: usize, mode: VmaMode, seed: u64) -> Result<VmaParams> {
    build_vma_with(lags, n_vars, mode, seed, IrfNormalization::Printed)
}

pub fn build_vma_with(
    lags: usize,
    n_vars: usize,
    mode: VmaMode,
    seed: u64,
    norm: IrfNormalization,
) -> Result<VmaParams> {
    if n_vars < 2 {
        return Err(Error::InvalidArgument("the process needs at least two variables".into()));
    }
    mode.validate()?;
    let irf = true_irf_with(lags, norm)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let star = DMatrix::from_fn(n_vars, n_vars, |_, _| rng.random_range(0.0..0.5));
    let mut gammas = Vec::with_capacity(lags + 1);
    for (l, &irf_l) in irf.iter().enumerate() {
        let weight = 0.5 * (lags + 2 - l) as f64 / (lags + 1) as f64;
        let mut g = &star * weight;
        g[(1, 0)] = irf_l;
        match mode {
            VmaMode::ShockObserved => {
                g.row_mut(0).fill(0.0);
                if l == 0 {
                    g[(0, 0)] = 1.0;
                }
            }
            VmaMode::Iv { .. } => {
                // Unit impact on the endogenous regressor, so the IV target is the response itself.
                if l == 0 {
                    g[(0, 0)] = 1.0;
                }
            }
        }
        gammas.push(g);
    }
    Ok(VmaParams { lags, n_vars, gammas, mode, seed })
}

/// A simulated sample with its hidden inputs.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Columns `w1..wM` then `z1..zR`.
    pub data: TimeSeriesData,
    /// `ε₁,t` aligned with the rows of `data`.
    pub shock: Vec<f64>,
    /// Structural shocks, one row per emitted period.
    pub shocks: DMatrix<f64>,
    /// Instrument noise `ϵ_r,t`, one row per emitted period.
    pub noise: DMatrix<f64>,
}

/// Stationary variance of the first instrument.
fn first_instrument_variance(r: usize, rho: f64, beta: f64) -> f64 {
    let inv = 1.0 / r as f64;
    let phi = rho * inv;
    inv * inv * (1.0 + (1.0 - rho * rho) * beta * beta) / (1.0 - phi * phi)
}

/// Draw `T + H` rows from the process; the first `L` shock vectors are presample.
pub fn simulate(params: &VmaParams, t: usize, horizon: usize, seed: u64) -> Result<Simulation> {
    let n_rows = t + horizon;
    if n_rows == 0 {
        return Err(Error::InvalidArgument("sample length must be positive".into()));
    }
    if params.gammas.len() != params.lags + 1
        || params.gammas.iter().any(|g| g.shape() != (params.n_vars, params.n_vars))
    {
        return Err(Error::Dimension("moving-average matrices do not match the lag order".into()));
    }
    params.mode.validate()?;
    let m = params.n_vars;
    let l_max = params.lags;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let total = n_rows + l_max;
    let eps = DMatrix::from_fn(total, m, |_, _| rng.sample::<f64, _>(StandardNormal));

    let r = params.mode.n_instruments();
    let mut values = DMatrix::zeros(n_rows, m + r);
    for row in 0..n_rows {
        let now = row + l_max;
        for (l, g) in params.gammas.iter().enumerate() {
            let e = eps.row(now - l).transpose();
            let w = g * e;
            for i in 0..m {
                values[(row, i)] += w[i];
            }
        }
    }

    let mut noise = DMatrix::zeros(n_rows, r);
    if let VmaMode::Iv { r, rho, beta } = params.mode {
        let inv = 1.0 / r as f64;
        let scale = (1.0 - rho * rho).sqrt() * beta * inv;
        let mut prev_first =
            first_instrument_variance(r, rho, beta).sqrt() * rng.sample::<f64, _>(StandardNormal);
        for row in 0..n_rows {
            let e1 = eps[(row + l_max, 0)];
            let mut first = 0.0;
            for k in 0..r {
                let nu: f64 = rng.sample(StandardNormal);
                noise[(row, k)] = nu;
                let z = inv * e1 + rho * inv * prev_first + scale * nu;
                values[(row, m + k)] = z;
                if k == 0 {
                    first = z;
                }
            }
            prev_first = first;
        }
    }

    let mut names: Vec<String> = (1..=m).map(|i| format!("w{i}")).collect();
    names.extend((1..=r).map(|i| format!("z{i}")));
    let shocks = eps.rows(l_max, n_rows).into_owned();
    Ok(Simulation {
        data: TimeSeriesData::new(values, names)?,
        shock: shocks.column(0).iter().copied().collect(),
        shocks,
        noise,
    })
}
