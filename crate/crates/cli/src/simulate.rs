use std::path::Path;

use qblp::dgp::{build_vma_with, simulate, IrfNormalization};
use qblp::montecarlo::replication_seeds;
use qblp::VmaMode;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::manifest::write_output;
use crate::Outcome;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub lags: usize,
    pub n_vars: usize,
    pub t: usize,
    pub horizon: usize,
    pub mode: VmaMode,
    pub irf_norm: IrfNormalization,
    pub seed: u64,
}

pub fn run(cfg: &SimulateConfig, out: &Path) -> CliResult<Outcome> {
    let seeds = replication_seeds(cfg.seed, 0);
    let params = build_vma_with(cfg.lags, cfg.n_vars, cfg.mode, seeds.dgp, cfg.irf_norm)?;
    let sim = simulate(&params, cfg.t, cfg.horizon, seeds.data)?;

    let mut data = Vec::new();
    sim.data.write_csv(&mut data)?;
    write_output(out, "data.csv", &String::from_utf8(data).expect("csv is utf-8"))?;

    let irf = params.irf();
    let mut truth = String::from("index,shock,irf\n");
    for (i, e) in sim.shock.iter().enumerate() {
        let g = irf.get(i).map(|v| format!("{v:?}")).unwrap_or_default();
        truth.push_str(&format!("{i},{e:?},{g}\n"));
    }
    write_output(out, "truth.csv", &truth)?;

    Ok(Outcome {
        inputs: Vec::new(),
        outputs: vec!["data.csv".into(), "truth.csv".into()],
        seed: cfg.seed,
        extra: serde_json::Map::new(),
    })
}
