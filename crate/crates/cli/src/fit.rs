use std::path::{Path, PathBuf};

use qblp::bands::{extract_irf_covariance, pointwise_asymptotic, pointwise_raw, supt_plugin, supt_quantile, Interval};
use qblp::estimators::{asymptotic_covariance, lte_geometry, muller_sandwich};
use qblp::montecarlo::replication_seeds;
use qblp::samplers::{run_ags, run_gess, run_pseudo_gibbs, ChainConfig, ThetaDraws};
use qblp::stats::normal_quantile;
use qblp::{build_design, load_csv, DesignConfig, LpDesign, ThetaMatrix};
use serde::{Deserialize, Serialize};

use crate::choices::{CovChoice, FamilyArg, PriorChoice, SamplerArg};
use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_file, write_output, FileDigest};
use crate::Outcome;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub data: PathBuf,
    pub design: DesignConfig,
    pub prior: PriorChoice,
    pub method: FamilyArg,
    pub sampler: SamplerArg,
    pub cov: CovChoice,
    pub chain: ChainConfig,
    pub alpha: f64,
    pub n_sim: usize,
    pub write_draws: bool,
}

const SHOCK: usize = 0;

struct Summary {
    point: Vec<f64>,
    raw: Vec<Interval>,
    asym: Vec<Interval>,
    plugin: Option<Vec<Interval>>,
    quantile: Vec<Interval>,
}

fn summary_csv(s: &Summary) -> String {
    let mut out = String::from(
        "h,point,pw_raw_lo,pw_raw_hi,pw_asym_lo,pw_asym_hi,plugin_lo,plugin_hi,quantile_lo,quantile_hi\n",
    );
    for h in 0..s.point.len() {
        let plugin = match &s.plugin {
            Some(b) => format!("{:?},{:?}", b[h].lo, b[h].hi),
            None => ",".to_string(),
        };
        out.push_str(&format!(
            "{h},{:?},{:?},{:?},{:?},{:?},{plugin},{:?},{:?}\n",
            s.point[h], s.raw[h].lo, s.raw[h].hi, s.asym[h].lo, s.asym[h].hi, s.quantile[h].lo, s.quantile[h].hi
        ));
    }
    out
}

fn draws_csv(draws: &ThetaDraws, design: &LpDesign) -> String {
    let j = design.n_regressors();
    let names: Vec<String> = draws
        .columns
        .iter()
        .map(|&c| format!("h{}.{}", c / j, design.x_names[c % j]))
        .collect();
    let mut out = names.join(",");
    out.push('\n');
    for row in draws.draws.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn check_nesting(s: &Summary) -> CliResult<()> {
    let nests = |outer: &[Interval], inner: &[Interval]| outer.iter().zip(inner).all(|(o, i)| o.contains_interval(i));
    let plugin_ok = s.plugin.as_ref().map_or(true, |b| nests(b, &s.asym));
    if plugin_ok && nests(&s.quantile, &s.raw) {
        Ok(())
    } else {
        Err(CliError::Numerical("a simultaneous band fails to contain its pointwise interval".into()))
    }
}

pub fn run(cfg: &FitConfig, out: &Path) -> CliResult<Outcome> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    if cfg.method == FamilyArg::Pseudo && (cfg.sampler == SamplerArg::Ags || cfg.design.iv.is_some()) {
        return Err(CliError::Usage("the pseudo-likelihood supports neither AGS nor instruments".into()));
    }
    let data = load_csv(&cfg.data)?;
    let design = build_design(&data, &cfg.design)?;
    let (j, nh, t) = (design.n_regressors(), design.n_horizons(), design.t_eff());
    let cov = cfg.cov.resolve(t);
    let prior = cfg.prior.build(j, cfg.design.horizon)?;
    let seeds = replication_seeds(cfg.chain.seed, 0);
    let z = normal_quantile(1.0 - cfg.alpha / 2.0);

    let (draws, asym, plugin) = match cfg.method {
        FamilyArg::Lte => {
            let geom = lte_geometry(&design, cov, design.has_iv())?;
            let draws = match cfg.sampler {
                SamplerArg::Gess => run_gess(&geom, &prior, &cfg.chain)?,
                SamplerArg::Ags => run_ags(&geom, &prior, &cfg.chain)?,
            };
            let mean: Vec<f64> = draws.path_draws(SHOCK, j, nh)?.column_iter().map(|c| c.mean()).collect();
            let omega1 = extract_irf_covariance(&asymptotic_covariance(&geom)?, SHOCK, j, nh - 1)?;
            let asym = pointwise_asymptotic(&mean, &omega1, t, cfg.alpha)?;
            let band = supt_plugin(&omega1, &mean, t, cfg.alpha, cfg.n_sim, seeds.bands)?;
            (draws, asym, Some(band.simultaneous))
        }
        FamilyArg::Pseudo => {
            let draws = run_pseudo_gibbs(&design, &prior, &cfg.chain)?.theta;
            let post = ThetaMatrix::from_vec(j, nh, draws.mean().as_slice())?;
            let asym = muller_sandwich(&design, &post, cov)?
                .iter()
                .zip(post.path(SHOCK))
                .map(|(v, m)| {
                    let s = v[(SHOCK, SHOCK)].sqrt();
                    Interval { lo: m - z * s, hi: m + z * s }
                })
                .collect();
            (draws, asym, None)
        }
    };
    let path = draws.path_draws(SHOCK, j, nh)?;
    let point: Vec<f64> = path.column_iter().map(|c| c.mean()).collect();
    let quantile = supt_quantile(&path, cfg.alpha)?;
    let summary = Summary { point, raw: pointwise_raw(&path, cfg.alpha)?, asym, plugin, quantile: quantile.simultaneous };
    check_nesting(&summary)?;

    write_output(out, "summary.csv", &summary_csv(&summary))?;
    let mut outputs = vec!["summary.csv".to_string()];
    if cfg.write_draws {
        write_output(out, "draws.csv", &draws_csv(&draws, &design))?;
        outputs.push("draws.csv".into());
    }
    write_output(
        out,
        "timing.csv",
        &format!(
            "elapsed_s,min_ess_per_iter,min_ess_per_sec\n{:?},{:?},{:?}\n",
            draws.elapsed.as_secs_f64(),
            draws.min_ess_per_iter(),
            draws.min_ess_per_sec()
        ),
    )?;

    let mut extra = serde_json::Map::new();
    extra.insert("n_params".into(), design.n_params().into());
    extra.insert("n_regressors".into(), j.into());
    extra.insert("t_eff".into(), t.into());
    extra.insert("cov_kind".into(), serde_json::to_value(cov).expect("serializes"));
    extra.insert("xi".into(), serde_json::to_value(quantile.xi).expect("serializes"));
    extra.insert("accept".into(), serde_json::to_value(draws.accept).expect("serializes"));
    let data_path = cfg.data.display().to_string();
    Ok(Outcome {
        inputs: vec![FileDigest { sha256: sha256_file(&cfg.data)?, path: data_path }],
        outputs,
        seed: cfg.chain.seed,
        extra,
    })
}
