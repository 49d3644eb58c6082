//! Quasi-Bayesian inference for local projections.
//!
//! The GMM criterion of a (possibly instrumented) local projection is turned
//! into a quasi-posterior with the Laplace-type estimator. Posterior draws
//! come from a generalized elliptical slice sampler, an approximate Gibbs
//! sampler for hierarchical smoothness priors, or the SUR pseudo-posterior
//! Gibbs sampler used as a baseline. Pointwise and sup-t bands, a VMA data
//! generator and a Monte Carlo harness sit on top.

pub mod bands;
pub mod data;
pub mod design;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod montecarlo;
pub mod posteriors;
pub mod samplers;
pub mod stats;

#[cfg(test)]
mod testutil;

pub use bands::{BandMethod, BandResult, Interval};
pub use data::{load_csv, TimeSeriesData};
pub use design::{build_design, DesignConfig, LdBase, LpDesign, SpecKind};
pub use dgp::{build_vma, simulate, true_irf, VmaMode, VmaParams};
pub use error::{Error, ErrorClass, Result};
pub use estimators::{LteGeometry, MomentCovKind, ThetaMatrix};
pub use montecarlo::{run_experiment, run_family, ExperimentConfig, Method, MetricsTable};
pub use posteriors::PriorSpec;
pub use samplers::{ChainConfig, ThetaDraws};
