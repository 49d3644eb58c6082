use std::path::Path;

use qblp::montecarlo::{run_family, IvSpec, Method, MetricsTable};
use qblp::samplers::ChainConfig;
use qblp::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::choices::{CovChoice, SpecArg};
use crate::error::{CliError, CliResult};
use crate::manifest::write_output;
use crate::Outcome;

/// A resolved experiment grid: every `t` crossed with every `spec`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub t: Vec<usize>,
    pub spec: Vec<SpecArg>,
    pub horizon: usize,
    pub lags: usize,
    pub n_vars: usize,
    pub n_reps: usize,
    pub method: Method,
    pub cov: CovChoice,
    pub iv: Option<IvSpec>,
    pub alpha: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub shrink_limit: usize,
    pub seed: u64,
    pub n_sim: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    pub fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Config file contents; anything missing falls back to flags or defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McFile {
    pub t: Option<OneOrMany<usize>>,
    pub spec: Option<OneOrMany<SpecArg>>,
    pub horizon: Option<usize>,
    pub lags: Option<usize>,
    pub n_vars: Option<usize>,
    pub n_reps: Option<usize>,
    pub method: Option<Method>,
    pub cov: Option<CovChoice>,
    pub iv: Option<bool>,
    pub iv_r: Option<usize>,
    pub iv_rho: Option<f64>,
    pub iv_beta: Option<f64>,
    pub alpha: Option<f64>,
    pub n_iter: Option<usize>,
    pub burn_in: Option<usize>,
    pub shrink_limit: Option<usize>,
    pub seed: Option<u64>,
    pub n_sim: Option<usize>,
}

impl McFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config file: {}", e.message())))
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: McFile) -> McFile {
        McFile {
            t: over.t.or(self.t),
            spec: over.spec.or(self.spec),
            horizon: over.horizon.or(self.horizon),
            lags: over.lags.or(self.lags),
            n_vars: over.n_vars.or(self.n_vars),
            n_reps: over.n_reps.or(self.n_reps),
            method: over.method.or(self.method),
            cov: over.cov.or(self.cov),
            iv: over.iv.or(self.iv),
            iv_r: over.iv_r.or(self.iv_r),
            iv_rho: over.iv_rho.or(self.iv_rho),
            iv_beta: over.iv_beta.or(self.iv_beta),
            alpha: over.alpha.or(self.alpha),
            n_iter: over.n_iter.or(self.n_iter),
            burn_in: over.burn_in.or(self.burn_in),
            shrink_limit: over.shrink_limit.or(self.shrink_limit),
            seed: over.seed.or(self.seed),
            n_sim: over.n_sim.or(self.n_sim),
        }
    }

    pub fn resolve(self) -> McConfig {
        let d = ExperimentConfig::default();
        let base_iv = IvSpec::default();
        let iv_given = self.iv_r.is_some() || self.iv_rho.is_some() || self.iv_beta.is_some();
        let iv = if self.iv.unwrap_or(iv_given) {
            Some(IvSpec {
                r: self.iv_r.unwrap_or(base_iv.r),
                rho: self.iv_rho.unwrap_or(base_iv.rho),
                beta: self.iv_beta.unwrap_or(base_iv.beta),
            })
        } else {
            None
        };
        McConfig {
            t: self.t.map(OneOrMany::into_vec).unwrap_or_else(|| vec![d.t]),
            spec: self.spec.map(OneOrMany::into_vec).unwrap_or_else(|| vec![SpecArg::Ld]),
            horizon: self.horizon.unwrap_or(d.horizon),
            lags: self.lags.unwrap_or(d.lags),
            n_vars: self.n_vars.unwrap_or(d.n_vars),
            n_reps: self.n_reps.unwrap_or(d.n_reps),
            method: self.method.unwrap_or(d.method),
            cov: self.cov.unwrap_or(CovChoice::Standard),
            iv,
            alpha: self.alpha.unwrap_or(d.alpha),
            n_iter: self.n_iter.unwrap_or(d.chain.n_iter),
            burn_in: self.burn_in.unwrap_or(d.chain.burn_in),
            shrink_limit: self.shrink_limit.unwrap_or(d.chain.shrink_limit),
            seed: self.seed.unwrap_or(d.seed),
            n_sim: self.n_sim.unwrap_or(d.n_sim),
        }
    }
}

impl McConfig {
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &t in &self.t {
            for &spec in &self.spec {
                out.push(ExperimentConfig {
                    t,
                    horizon: self.horizon,
                    lags: self.lags,
                    n_vars: self.n_vars,
                    n_reps: self.n_reps,
                    spec: spec.into(),
                    method: self.method,
                    cov_kind: self.cov.resolve(t),
                    iv: self.iv,
                    alpha: self.alpha,
                    chain: ChainConfig {
                        shrink_limit: self.shrink_limit,
                        ..ChainConfig::new(self.n_iter, self.burn_in, 0)
                    },
                    seed: self.seed,
                    n_sim: self.n_sim,
                });
            }
        }
        out
    }

    /// All problems across the grid, reported together.
    pub fn validate(&self) -> CliResult<()> {
        let mut problems = Vec::new();
        if self.t.is_empty() || self.spec.is_empty() {
            problems.push("the grid needs at least one t and one spec".to_string());
        }
        for cell in self.cells() {
            for p in cell.problems() {
                let msg = format!("t={}: {p}", cell.t);
                if !problems.contains(&msg) {
                    problems.push(msg);
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(problems.join("; ")))
        }
    }
}

pub fn run(cfg: &McConfig, out: &Path) -> CliResult<Outcome> {
    cfg.validate()?;
    let mut csv = MetricsTable::csv_header(cfg.horizon + 1);
    let mut text = String::new();
    let mut timing = String::from("t,spec,method,min_ess_per_iter,min_ess_per_sec\n");
    let mut failed = 0;
    for cell in cfg.cells() {
        let tables = run_family(&cell)?;
        for table in [&tables.raw, &tables.sand] {
            csv.push_str(&table.csv_rows());
            text.push_str(&table.to_text());
            text.push('\n');
            let spec = serde_json::to_value(table.spec).expect("serializes");
            timing.push_str(&format!("{},{},{}", table.t, spec.as_str().unwrap_or(""), table.timing_row()));
        }
        failed += tables.raw.n_failed;
    }
    write_output(out, "metrics.csv", &csv)?;
    write_output(out, "metrics.txt", &text)?;
    write_output(out, "timing.csv", &timing)?;
    let mut extra = serde_json::Map::new();
    extra.insert("failed_replications".into(), failed.into());
    Ok(Outcome {
        inputs: Vec::new(),
        outputs: vec!["metrics.csv".into()],
        seed: cfg.seed,
        extra,
    })
}
