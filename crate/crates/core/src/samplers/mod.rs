//! Posterior simulators and chain diagnostics.

mod ags;
mod ess;
mod gess;
mod hyper;
mod mvn;
mod pseudo;

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ags::{run_ags, run_ags_fixed_scales};
pub use ess::{autocorrelation, effective_sample_size, min_ess};
pub use gess::{gess_step, run_gess, GessOutcome};
pub use hyper::{draw_inverse_gamma, update_hyperparameters};
pub use mvn::{standard_normal_vec, GaussianFit};
pub use pseudo::{inverse_wishart, run_pseudo_gibbs, PseudoDraws};

/// Shape of the inverse-gamma update for the smoothness scales τ_j.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauShape {
    /// `H/2`: the conjugate update for a rank-(H−1) penalty plus the ½ from the mixture.
    #[default]
    Conjugate,
    /// `(H−1)/2`.
    Printed,
}

impl TauShape {
    pub fn shape(self, horizon: usize) -> f64 {
        match self {
            TauShape::Conjugate => horizon as f64 / 2.0,
            TauShape::Printed => (horizon as f64 - 1.0) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Failed slice proposals tolerated before a random-walk MH step.
    pub shrink_limit: usize,
    /// Scale of the MH fallback proposal; `None` means `(2.38/√D)²`.
    pub mh_scale: Option<f64>,
    #[serde(default)]
    pub tau_shape: TauShape,
    /// Store only these θ coordinates (all when `None`).
    #[serde(default)]
    pub keep: Option<Vec<usize>>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 50_000,
            burn_in: 10_000,
            seed: 0,
            shrink_limit: 100,
            mh_scale: None,
            tau_shape: TauShape::Conjugate,
            keep: None,
        }
    }
}

impl ChainConfig {
    pub fn new(n_iter: usize, burn_in: usize, seed: u64) -> Self {
        Self { n_iter, burn_in, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.burn_in >= self.n_iter {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.n_iter
            )));
        }
        if let Some(s) = self.mh_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("MH scale must be positive, got {s}")));
            }
        }
        Ok(())
    }

    pub fn mh_scale_for(&self, dim: usize) -> f64 {
        self.mh_scale.unwrap_or_else(|| (2.38 / (dim as f64).sqrt()).powi(2))
    }

    pub fn n_kept(&self) -> usize {
        self.n_iter - self.burn_in
    }
}

/// Slice and fallback bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptStats {
    /// Steps whose first slice proposal was accepted.
    pub first_try: u64,
    /// Steps that ended with an accepted slice proposal.
    pub slice_accepts: u64,
    /// Total rejected slice proposals (bracket shrinks).
    pub shrinks: u64,
    pub mh_fallbacks: u64,
    pub mh_accepts: u64,
}

/// Post-burn-in draws, one row per iteration.
#[derive(Debug, Clone)]
pub struct ThetaDraws {
    pub draws: DMatrix<f64>,
    /// θ coordinate stored in each column.
    pub columns: Vec<usize>,
    pub accept: AcceptStats,
    pub seed: u64,
    pub burn_in: usize,
    pub elapsed: Duration,
}

impl ThetaDraws {
    pub fn n_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.draws.row_mean().transpose()
    }

    /// Column of `draws` holding θ coordinate `coord`.
    pub fn column_of(&self, coord: usize) -> Option<usize> {
        self.columns.iter().position(|&c| c == coord)
    }

    /// N×(H+1) draws of one regressor's coefficient path.
    pub fn path_draws(&self, regressor: usize, n_regressors: usize, n_horizons: usize) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.n_draws(), n_horizons);
        for h in 0..n_horizons {
            let c = self.column_of(h * n_regressors + regressor).ok_or_else(|| {
                Error::InvalidArgument(format!("coordinate {} was not stored", h * n_regressors + regressor))
            })?;
            out.set_column(h, &self.draws.column(c));
        }
        Ok(out)
    }

    pub fn min_ess(&self) -> f64 {
        min_ess(&self.draws)
    }

    pub fn min_ess_per_iter(&self) -> f64 {
        self.min_ess() / self.n_draws() as f64
    }

    pub fn min_ess_per_sec(&self) -> f64 {
        self.min_ess() / self.elapsed.as_secs_f64().max(1e-9)
    }
}

/// Row-major accumulator for kept draws.
pub(crate) struct DrawBuffer {
    columns: Vec<usize>,
    data: Vec<f64>,
    rows: usize,
}

impl DrawBuffer {
    pub(crate) fn new(cfg: &ChainConfig, dim: usize) -> Result<Self> {
        let columns = match &cfg.keep {
            Some(k) => {
                if k.iter().any(|&c| c >= dim) {
                    return Err(Error::InvalidArgument("kept coordinate out of range".into()));
                }
                k.clone()
            }
            None => (0..dim).collect(),
        };
        Ok(Self { data: Vec::with_capacity(columns.len() * cfg.n_kept()), columns, rows: 0 })
    }

    pub(crate) fn push(&mut self, theta: &[f64]) -> Result<()> {
        for &c in &self.columns {
            let v = theta[c];
            if !v.is_finite() {
                return Err(Error::Sampler(format!("non-finite draw at coordinate {c}")));
            }
            self.data.push(v);
        }
        self.rows += 1;
        Ok(())
    }

    pub(crate) fn finish(self, accept: AcceptStats, cfg: &ChainConfig, elapsed: Duration) -> ThetaDraws {
        ThetaDraws {
            draws: DMatrix::from_row_slice(self.rows, self.columns.len(), &self.data),
            columns: self.columns,
            accept,
            seed: cfg.seed,
            burn_in: cfg.burn_in,
            elapsed,
        }
    }
}
