//! Replication harness: simulate, fit, summarize against the known response.

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{
    extract_irf_covariance, pointwise_asymptotic, pointwise_raw, supt_plugin, supt_quantile, Interval,
    DEFAULT_N_SIM,
};
use crate::design::{build_design, DesignConfig, LpDesign, SpecKind};
use crate::dgp::{build_vma, simulate, true_irf, VmaMode};
use crate::error::{Error, Result};
use crate::estimators::{asymptotic_covariance, lte_geometry, muller_sandwich, MomentCovKind, ThetaMatrix};
use crate::posteriors::PriorSpec;
use crate::samplers::{run_ags, run_gess, run_pseudo_gibbs, ChainConfig, TauShape, ThetaDraws};
use crate::stats::{median, normal_quantile};

const SHOCK: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PseudoRaw,
    PseudoSand,
    LteRaw,
    LteSand,
}

impl Method {
    pub fn family(self) -> Family {
        match self {
            Method::PseudoRaw | Method::PseudoSand => Family::Pseudo,
            Method::LteRaw | Method::LteSand => Family::Lte,
        }
    }

    pub fn is_raw(self) -> bool {
        matches!(self, Method::PseudoRaw | Method::LteRaw)
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::PseudoRaw => "pseudo-raw",
            Method::PseudoSand => "pseudo-sand",
            Method::LteRaw => "lte-raw",
            Method::LteSand => "lte-sand",
        }
    }
}

/// Raw and sandwich variants share one set of draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Pseudo,
    Lte,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvSpec {
    pub r: usize,
    pub rho: f64,
    pub beta: f64,
}

impl Default for IvSpec {
    fn default() -> Self {
        Self { r: 1, rho: 0.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub t: usize,
    pub horizon: usize,
    pub lags: usize,
    pub n_vars: usize,
    pub n_reps: usize,
    pub spec: SpecKind,
    pub method: Method,
    pub cov_kind: MomentCovKind,
    pub iv: Option<IvSpec>,
    pub alpha: f64,
    pub chain: ChainConfig,
    pub seed: u64,
    pub n_sim: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            t: 500,
            horizon: 7,
            lags: 7,
            n_vars: 3,
            n_reps: 200,
            spec: SpecKind::LongDifferenced,
            method: Method::LteRaw,
            cov_kind: MomentCovKind::Standard,
            iv: None,
            alpha: 0.10,
            chain: ChainConfig::new(6_000, 1_000, 0),
            seed: 1,
            n_sim: DEFAULT_N_SIM,
        }
    }
}

impl ExperimentConfig {
    /// Every problem with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_reps == 0 {
            out.push("n_reps must be at least 1".to_string());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            out.push(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.lags == 0 {
            out.push("lags must be at least 1".to_string());
        }
        if self.n_vars < 2 {
            out.push("n_vars must be at least 2".to_string());
        }
        if self.t <= self.lags + 1 {
            out.push(format!("t = {} leaves no observations after {} lags", self.t, self.lags));
        }
        if self.n_sim == 0 {
            out.push("n_sim must be positive".to_string());
        }
        if let Err(e) = self.chain.validate() {
            out.push(e.to_string());
        }
        if let Some(iv) = &self.iv {
            if let Err(e) = (VmaMode::Iv { r: iv.r, rho: iv.rho, beta: iv.beta }).validate() {
                out.push(e.to_string());
            }
            if self.method.family() == Family::Pseudo {
                out.push("the pseudo-likelihood has no instrumented variant".to_string());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(p.join("; ")))
        }
    }

    fn mode(&self) -> VmaMode {
        match self.iv {
            None => VmaMode::ShockObserved,
            Some(IvSpec { r, rho, beta }) => VmaMode::Iv { r, rho, beta },
        }
    }

    fn design_config(&self) -> DesignConfig {
        let controls: Vec<String> = (3..=self.n_vars).map(|i| format!("w{i}")).collect();
        let cfg = DesignConfig::new("w2", "w1", self.horizon, self.lags, self.spec).controls(&controls);
        match self.iv {
            Some(iv) => cfg.iv(&(1..=iv.r).map(|i| format!("z{i}")).collect::<Vec<_>>()),
            None => cfg,
        }
    }

    /// The response to recover at horizons `0..=H`; zero beyond the MA order.
    pub fn truth(&self) -> Result<Vec<f64>> {
        let irf = true_irf(self.lags)?;
        Ok((0..=self.horizon).map(|h| irf.get(h).copied().unwrap_or(0.0)).collect())
    }
}

/// Seeds for one replication, from its own stream of the master generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationSeeds {
    pub dgp: u64,
    pub data: u64,
    pub chain: u64,
    pub bands: u64,
}

pub fn replication_seeds(master: u64, rep: usize) -> ReplicationSeeds {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(rep as u64);
    ReplicationSeeds { dgp: rng.next_u64(), data: rng.next_u64(), chain: rng.next_u64(), bands: rng.next_u64() }
}

/// One method's output on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantOutcome {
    pub mean: Vec<f64>,
    pub intervals: Vec<Interval>,
    pub band_plugin: Option<Vec<Interval>>,
    pub band_quantile: Option<Vec<Interval>>,
}

#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub raw: VariantOutcome,
    pub sand: VariantOutcome,
    pub min_ess_per_iter: f64,
    pub min_ess_per_sec: f64,
}

pub fn simulate_design(cfg: &ExperimentConfig, seeds: &ReplicationSeeds) -> Result<LpDesign> {
    let params = build_vma(cfg.lags, cfg.n_vars, cfg.mode(), seeds.dgp)?;
    let sim = simulate(&params, cfg.t, cfg.horizon, seeds.data)?;
    build_design(&sim.data, &cfg.design_config())
}

fn shock_path(draws: &ThetaDraws, design: &LpDesign) -> Result<DMatrix<f64>> {
    draws.path_draws(SHOCK, design.n_regressors(), design.n_horizons())
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.mean()).collect()
}

/// Fits one simulated dataset with both variants of the configured family.
pub fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<ReplicationOutcome> {
    let seeds = replication_seeds(cfg.seed, rep);
    let design = simulate_design(cfg, &seeds)?;
    let chain = ChainConfig { seed: seeds.chain, ..cfg.chain.clone() };
    let z = normal_quantile(1.0 - cfg.alpha / 2.0);
    let (j, nh, t) = (design.n_regressors(), design.n_horizons(), design.t_eff());

    let (draws, sand) = match cfg.method.family() {
        Family::Lte => {
            let geom = lte_geometry(&design, cfg.cov_kind, design.has_iv())?;
            let draws = run_gess(&geom, &PriorSpec::Flat, &chain)?;
            let path = shock_path(&draws, &design)?;
            let mean = column_means(&path);
            let omega1 = extract_irf_covariance(&asymptotic_covariance(&geom)?, SHOCK, j, nh - 1)?;
            let intervals = pointwise_asymptotic(&mean, &omega1, t, cfg.alpha)?;
            let band = supt_plugin(&omega1, &mean, t, cfg.alpha, cfg.n_sim, seeds.bands)?;
            let sand =
                VariantOutcome { mean, intervals, band_plugin: Some(band.simultaneous), band_quantile: None };
            (draws, sand)
        }
        Family::Pseudo => {
            let pd = run_pseudo_gibbs(&design, &PriorSpec::Flat, &chain)?;
            let draws = pd.theta;
            let post_mean = ThetaMatrix::from_vec(j, nh, draws.mean().as_slice())?;
            let path = shock_path(&draws, &design)?;
            let mean = column_means(&path);
            let cov = muller_sandwich(&design, &post_mean, cfg.cov_kind)?;
            let intervals = mean
                .iter()
                .zip(&cov)
                .map(|(&m, v)| {
                    let s = v[(SHOCK, SHOCK)].sqrt();
                    Interval { lo: m - z * s, hi: m + z * s }
                })
                .collect();
            (draws, VariantOutcome { mean, intervals, band_plugin: None, band_quantile: None })
        }
    };

    let path = shock_path(&draws, &design)?;
    let band = supt_quantile(&path, cfg.alpha)?;
    let raw = VariantOutcome {
        mean: sand.mean.clone(),
        intervals: pointwise_raw(&path, cfg.alpha)?,
        band_plugin: None,
        band_quantile: Some(band.simultaneous),
    };
    Ok(ReplicationOutcome {
        raw,
        sand,
        min_ess_per_iter: draws.min_ess_per_iter(),
        min_ess_per_sec: draws.min_ess_per_sec(),
    })
}

/// Share of replications whose interval covers the truth, per horizon.
pub fn pointwise_coverage(intervals: &[Vec<Interval>], truth: &[f64]) -> Vec<f64> {
    (0..truth.len())
        .map(|h| {
            let hit = intervals.iter().filter(|iv| iv[h].contains(truth[h])).count();
            hit as f64 / intervals.len().max(1) as f64
        })
        .collect()
}

/// Share of replications whose band covers the whole truth path.
pub fn simultaneous_coverage(bands: &[Vec<Interval>], truth: &[f64]) -> f64 {
    let hit = bands
        .iter()
        .filter(|b| b.iter().zip(truth).all(|(iv, &x)| iv.contains(x)))
        .count();
    hit as f64 / bands.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub method: Method,
    pub t: usize,
    pub spec: SpecKind,
    pub bias: Vec<f64>,
    pub mae: Vec<f64>,
    pub length: Vec<f64>,
    pub p_coverage: Vec<f64>,
    pub s_coverage_plugin: Option<f64>,
    pub s_coverage_quantile: Option<f64>,
    pub min_ess_per_iter: f64,
    /// Wall-clock dependent; kept out of the deterministic CSV.
    pub min_ess_per_sec: f64,
    pub n_reps: usize,
    pub n_failed: usize,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

impl MetricsTable {
    pub fn n_horizons(&self) -> usize {
        self.bias.len()
    }

    pub fn csv_header(n_horizons: usize) -> String {
        let mut s = String::from("t,spec,method,metric,value");
        for h in 0..n_horizons {
            s.push_str(&format!(",h{h}"));
        }
        s.push('\n');
        s
    }

    /// Rows in table layout: one per metric, horizons across. Scalar metrics
    /// go in `value`.
    pub fn csv_rows(&self) -> String {
        let spec = match self.spec {
            SpecKind::Level => "level",
            SpecKind::LongDifferenced => "ld",
        };
        let prefix = format!("{},{},{}", self.t, spec, self.method.label());
        let blank = ",".repeat(self.n_horizons());
        let mut s = String::new();
        for (name, row) in
            [("bias", &self.bias), ("mae", &self.mae), ("length", &self.length), ("p_coverage", &self.p_coverage)]
        {
            s.push_str(&format!("{prefix},{name},"));
            for v in row {
                s.push_str(&format!(",{v:?}"));
            }
            s.push('\n');
        }
        for (name, v) in [
            ("s_coverage_plugin", fmt_opt(self.s_coverage_plugin)),
            ("s_coverage_quantile", fmt_opt(self.s_coverage_quantile)),
            ("min_ess_per_iter", format!("{:?}", self.min_ess_per_iter)),
            ("n_reps", self.n_reps.to_string()),
            ("n_failed", self.n_failed.to_string()),
        ] {
            s.push_str(&format!("{prefix},{name},{v}{blank}\n"));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        Self::csv_header(self.n_horizons()) + &self.csv_rows()
    }

    pub fn timing_row(&self) -> String {
        format!("{},{:?},{:?}\n", self.method.label(), self.min_ess_per_iter, self.min_ess_per_sec)
    }

    /// Fixed-width text in the row/column layout of the published tables.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "T={} spec={:?} method={} reps={} failed={}\n{:<12}",
            self.t,
            self.spec,
            self.method.label(),
            self.n_reps,
            self.n_failed,
            "h"
        );
        for h in 0..self.n_horizons() {
            s.push_str(&format!("{h:>9}"));
        }
        s.push('\n');
        for (name, row) in
            [("Bias", &self.bias), ("MAE", &self.mae), ("Length", &self.length), ("P-Coverage", &self.p_coverage)]
        {
            s.push_str(&format!("{name:<12}"));
            for v in row {
                s.push_str(&format!("{v:>9.4}"));
            }
            s.push('\n');
        }
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "--".into());
        s.push_str(&format!(
            "S-Coverage plug-in {} quantile {}\nminESS/iter {:.3} minESS/s {:.1}\n",
            opt(self.s_coverage_plugin),
            opt(self.s_coverage_quantile),
            self.min_ess_per_iter,
            self.min_ess_per_sec
        ));
        s
    }
}

/// Both variants of one family from the same replications.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyTables {
    pub raw: MetricsTable,
    pub sand: MetricsTable,
}

fn summarize(
    cfg: &ExperimentConfig,
    method: Method,
    truth: &[f64],
    outcomes: &[(&VariantOutcome, f64, f64)],
    n_failed: usize,
) -> MetricsTable {
    let nh = truth.len();
    let per_h = |f: &dyn Fn(&VariantOutcome, usize) -> f64| -> Vec<f64> {
        (0..nh)
            .map(|h| median(&outcomes.iter().map(|(o, _, _)| f(o, h)).collect::<Vec<_>>()))
            .collect()
    };
    let intervals: Vec<Vec<Interval>> = outcomes.iter().map(|(o, _, _)| o.intervals.clone()).collect();
    let s_cov = |pick: &dyn Fn(&VariantOutcome) -> Option<&Vec<Interval>>| -> Option<f64> {
        let bands: Option<Vec<Vec<Interval>>> = outcomes.iter().map(|(o, _, _)| pick(o).cloned()).collect();
        bands.filter(|b| !b.is_empty()).map(|b| simultaneous_coverage(&b, truth))
    };
    let n = outcomes.len();
    MetricsTable {
        method,
        t: cfg.t,
        spec: cfg.spec,
        bias: per_h(&|o, h| o.mean[h] - truth[h]),
        mae: per_h(&|o, h| (o.mean[h] - truth[h]).abs()),
        length: per_h(&|o, h| o.intervals[h].length()),
        p_coverage: if n == 0 { vec![f64::NAN; nh] } else { pointwise_coverage(&intervals, truth) },
        s_coverage_plugin: s_cov(&|o| o.band_plugin.as_ref()),
        s_coverage_quantile: s_cov(&|o| o.band_quantile.as_ref()),
        min_ess_per_iter: median(&outcomes.iter().map(|(_, e, _)| *e).collect::<Vec<_>>()),
        min_ess_per_sec: median(&outcomes.iter().map(|(_, _, e)| *e).collect::<Vec<_>>()),
        n_reps: n,
        n_failed,
    }
}

/// Runs every replication (in parallel) and summarizes both variants.
/// Failed replications are excluded and counted.
pub fn run_family(cfg: &ExperimentConfig) -> Result<FamilyTables> {
    cfg.validate()?;
    let truth = cfg.truth()?;
    let results: Vec<Result<ReplicationOutcome>> =
        (0..cfg.n_reps).into_par_iter().map(|rep| run_replication(cfg, rep)).collect();
    let ok: Vec<&ReplicationOutcome> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let n_failed = results.len() - ok.len();
    if ok.is_empty() {
        return Err(results.into_iter().find_map(|r| r.err()).expect("at least one failure"));
    }
    let (raw_m, sand_m) = match cfg.method.family() {
        Family::Lte => (Method::LteRaw, Method::LteSand),
        Family::Pseudo => (Method::PseudoRaw, Method::PseudoSand),
    };
    let raw: Vec<_> = ok.iter().map(|o| (&o.raw, o.min_ess_per_iter, o.min_ess_per_sec)).collect();
    let sand: Vec<_> = ok.iter().map(|o| (&o.sand, o.min_ess_per_iter, o.min_ess_per_sec)).collect();
    Ok(FamilyTables {
        raw: summarize(cfg, raw_m, &truth, &raw, n_failed),
        sand: summarize(cfg, sand_m, &truth, &sand, n_failed),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsTable> {
    let tables = run_family(cfg)?;
    Ok(if cfg.method.is_raw() { tables.raw } else { tables.sand })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub t: usize,
    pub horizon: usize,
    pub lags: usize,
    pub n_vars: usize,
    pub spec: SpecKind,
    pub kappa: f64,
    pub cov_kind: MomentCovKind,
    /// AGS iterations and burn-in; GESS runs `gess_factor` times as long.
    pub n_iter: usize,
    pub burn_in: usize,
    pub gess_factor: usize,
    pub seed: u64,
    #[serde(default)]
    pub tau_shape: TauShape,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            t: 500,
            horizon: 7,
            lags: 7,
            n_vars: 3,
            spec: SpecKind::LongDifferenced,
            kappa: 100.0,
            cov_kind: MomentCovKind::Standard,
            n_iter: 50_000,
            burn_in: 10_000,
            gess_factor: 20,
            seed: 1,
            tau_shape: TauShape::Conjugate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerSummary {
    pub n_draws: usize,
    pub min_ess_per_iter: f64,
    pub min_ess_per_sec: f64,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    /// Two-sample KS statistic per response coordinate.
    pub ks: Vec<f64>,
    pub max_ks: f64,
    pub ags: SamplerSummary,
    pub gess: SamplerSummary,
}

fn sampler_summary(d: &ThetaDraws, design: &LpDesign) -> Result<SamplerSummary> {
    Ok(SamplerSummary {
        n_draws: d.n_draws(),
        min_ess_per_iter: d.min_ess_per_iter(),
        min_ess_per_sec: d.min_ess_per_sec(),
        mean: column_means(&shock_path(d, design)?),
    })
}

/// AGS and a longer GESS chain on one dataset under the smoothness prior.
/// Draws and ESS cover the response coordinates.
pub fn compare_samplers(cfg: &CompareConfig) -> Result<CompareReport> {
    if cfg.gess_factor == 0 {
        return Err(Error::InvalidArgument("gess_factor must be positive".into()));
    }
    let exp = ExperimentConfig {
        t: cfg.t,
        horizon: cfg.horizon,
        lags: cfg.lags,
        n_vars: cfg.n_vars,
        spec: cfg.spec,
        seed: cfg.seed,
        ..ExperimentConfig::default()
    };
    let seeds = replication_seeds(cfg.seed, 0);
    let design = simulate_design(&exp, &seeds)?;
    let geom = lte_geometry(&design, cfg.cov_kind, false)?;
    let prior = PriorSpec::roughness(cfg.kappa, design.n_regressors(), cfg.horizon)?;
    let keep: Vec<usize> = (0..design.n_horizons()).map(|h| h * design.n_regressors() + SHOCK).collect();
    let ags_cfg = ChainConfig {
        keep: Some(keep.clone()),
        tau_shape: cfg.tau_shape,
        ..ChainConfig::new(cfg.n_iter, cfg.burn_in, seeds.chain)
    };
    let gess_cfg = ChainConfig {
        keep: Some(keep),
        tau_shape: cfg.tau_shape,
        ..ChainConfig::new(cfg.n_iter * cfg.gess_factor, cfg.burn_in * cfg.gess_factor, seeds.bands)
    };
    let ags = run_ags(&geom, &prior, &ags_cfg)?;
    let gess = run_gess(&geom, &prior, &gess_cfg)?;
    let ks: Vec<f64> = (0..design.n_horizons())
        .map(|h| {
            crate::stats::ks_two_sample(ags.draws.column(h).as_slice(), gess.draws.column(h).as_slice())
        })
        .collect();
    Ok(CompareReport {
        max_ks: ks.iter().copied().fold(0.0, f64::max),
        ks,
        ags: sampler_summary(&ags, &design)?,
        gess: sampler_summary(&gess, &design)?,
    })
}
