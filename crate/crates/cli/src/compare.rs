use std::path::Path;

use qblp::montecarlo::{compare_samplers, CompareConfig};
use serde_json::json;

use crate::error::CliResult;
use crate::manifest::write_output;
use crate::Outcome;

pub fn run(cfg: &CompareConfig, out: &Path) -> CliResult<Outcome> {
    let report = compare_samplers(cfg)?;
    let summary = |s: &qblp::montecarlo::SamplerSummary| {
        json!({ "n_draws": s.n_draws, "min_ess_per_iter": s.min_ess_per_iter, "mean": s.mean })
    };
    let body = json!({
        "ks": report.ks,
        "max_ks": report.max_ks,
        "ags": summary(&report.ags),
        "gess": summary(&report.gess),
    });
    write_output(out, "compare.json", &serde_json::to_string_pretty(&body).expect("serializes"))?;
    write_output(
        out,
        "timing.csv",
        &format!(
            "sampler,min_ess_per_iter,min_ess_per_sec\nags,{:?},{:?}\ngess,{:?},{:?}\n",
            report.ags.min_ess_per_iter,
            report.ags.min_ess_per_sec,
            report.gess.min_ess_per_iter,
            report.gess.min_ess_per_sec
        ),
    )?;
    Ok(Outcome {
        inputs: Vec::new(),
        outputs: vec!["compare.json".into()],
        seed: cfg.seed,
        extra: serde_json::Map::new(),
    })
}
