//! `qblp`: fit local projections, simulate data and run Monte Carlo studies.

mod choices;
mod compare;
mod error;
mod fit;
mod manifest;
mod mc;
mod simulate;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qblp::dgp::IrfNormalization;
use qblp::montecarlo::{CompareConfig, Method};
use qblp::samplers::{ChainConfig, TauShape};
use qblp::{DesignConfig, LdBase, VmaMode};

use choices::{CovChoice, FamilyArg, PriorChoice, SamplerArg, SpecArg};
use error::{CliError, CliResult};
use manifest::{digests, now, RunManifest};

/// What a command reports back for the manifest.
pub struct Outcome {
    pub inputs: Vec<manifest::FileDigest>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Parser)]
#[command(name = "qblp", version, about = "Quasi-Bayesian local projections")]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "QBLP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate impulse responses from a CSV file.
    Fit(FitArgs),
    /// Draw a sample from the moving-average process.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo experiment grid.
    Mc(McArgs),
    /// Compare the approximate Gibbs and elliptical slice samplers.
    CompareSamplers(CompareArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long, default_value_t = 50_000)]
    n_iter: usize,
    #[arg(long, default_value_t = 10_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rejected slice proposals before a random-walk step.
    #[arg(long, default_value_t = 100)]
    shrink_limit: usize,
    #[arg(long)]
    mh_scale: Option<f64>,
    #[arg(long, value_enum, default_value_t = TauShapeArg::Conjugate)]
    tau_shape: TauShapeArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum TauShapeArg {
    Conjugate,
    Printed,
}

impl From<TauShapeArg> for TauShape {
    fn from(t: TauShapeArg) -> TauShape {
        match t {
            TauShapeArg::Conjugate => TauShape::Conjugate,
            TauShapeArg::Printed => TauShape::Printed,
        }
    }
}

impl ChainArgs {
    fn config(&self) -> ChainConfig {
        ChainConfig {
            shrink_limit: self.shrink_limit,
            mh_scale: self.mh_scale,
            tau_shape: self.tau_shape.into(),
            ..ChainConfig::new(self.n_iter, self.burn_in, self.seed)
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LdBaseArg {
    PreShock,
    Current,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long)]
    shock: String,
    #[arg(long, value_delimiter = ',')]
    controls: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    iv: Vec<String>,
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    lags: usize,
    #[arg(long, value_enum, default_value_t = SpecArg::Level)]
    spec: SpecArg,
    #[arg(long, value_enum, default_value_t = LdBaseArg::PreShock)]
    ld_base: LdBaseArg,
    /// Add lags of the instruments to the exogenous regressors.
    #[arg(long)]
    lag_instruments: bool,
    /// `flat` or `rp:KAPPA`.
    #[arg(long, default_value = "flat")]
    prior: PriorChoice,
    #[arg(long, value_enum, default_value_t = FamilyArg::Lte)]
    method: FamilyArg,
    #[arg(long, value_enum, default_value_t = SamplerArg::Gess)]
    sampler: SamplerArg,
    /// `standard`, `nw` or `nw:S`.
    #[arg(long, default_value = "standard")]
    cov: CovChoice,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 0.10)]
    alpha: f64,
    #[arg(long, default_value_t = qblp::bands::DEFAULT_N_SIM)]
    n_sim: usize,
    /// Also write every posterior draw.
    #[arg(long)]
    draws: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    ShockObserved,
    Iv,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Printed,
    Unit,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 7)]
    lags: usize,
    #[arg(long, default_value_t = 3)]
    n_vars: usize,
    #[arg(long)]
    t: usize,
    #[arg(long, default_value_t = 7)]
    horizon: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::ShockObserved)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    r: usize,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = NormArg::Printed)]
    irf_norm: NormArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct McArgs {
    /// TOML file with any of the flag names below as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    t: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    spec: Vec<SpecArg>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    lags: Option<usize>,
    #[arg(long)]
    n_vars: Option<usize>,
    #[arg(long)]
    n_reps: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    cov: Option<CovChoice>,
    /// Instrumented design (baseline r=1, rho=0, beta=1).
    #[arg(long)]
    iv: bool,
    #[arg(long)]
    iv_r: Option<usize>,
    #[arg(long)]
    iv_rho: Option<f64>,
    #[arg(long)]
    iv_beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    shrink_limit: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_sim: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    PseudoRaw,
    PseudoSand,
    LteRaw,
    LteSand,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::PseudoRaw => Method::PseudoRaw,
            MethodArg::PseudoSand => Method::PseudoSand,
            MethodArg::LteRaw => Method::LteRaw,
            MethodArg::LteSand => Method::LteSand,
        }
    }
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, default_value_t = 500)]
    t: usize,
    #[arg(long, default_value_t = 7)]
    horizon: usize,
    #[arg(long, default_value_t = 7)]
    lags: usize,
    #[arg(long, default_value_t = 3)]
    n_vars: usize,
    #[arg(long, value_enum, default_value_t = SpecArg::Ld)]
    spec: SpecArg,
    #[arg(long, default_value_t = 100.0)]
    kappa: f64,
    #[arg(long, default_value = "standard")]
    cov: CovChoice,
    #[arg(long, default_value_t = 50_000)]
    n_iter: usize,
    #[arg(long, default_value_t = 10_000)]
    burn_in: usize,
    /// The elliptical slice chain runs this many times longer.
    #[arg(long, default_value_t = 20)]
    gess_factor: usize,
    #[arg(long, value_enum, default_value_t = TauShapeArg::Conjugate)]
    tau_shape: TauShapeArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// A command with its configuration fully resolved.
enum Resolved {
    Fit(fit::FitConfig),
    Simulate(simulate::SimulateConfig),
    Mc(mc::McConfig),
    Compare(CompareConfig),
}

impl Resolved {
    fn name(&self) -> &'static str {
        match self {
            Resolved::Fit(_) => "fit",
            Resolved::Simulate(_) => "simulate",
            Resolved::Mc(_) => "mc",
            Resolved::Compare(_) => "compare-samplers",
        }
    }

    fn config_json(&self) -> serde_json::Value {
        match self {
            Resolved::Fit(c) => serde_json::to_value(c),
            Resolved::Simulate(c) => serde_json::to_value(c),
            Resolved::Mc(c) => serde_json::to_value(c),
            Resolved::Compare(c) => serde_json::to_value(c),
        }
        .expect("configuration serializes")
    }

    fn from_manifest(m: &RunManifest) -> CliResult<Self> {
        let bad = |e: serde_json::Error| CliError::Data(format!("manifest config: {e}"));
        let c = m.config.clone();
        Ok(match m.command.as_str() {
            "fit" => Resolved::Fit(serde_json::from_value(c).map_err(bad)?),
            "simulate" => Resolved::Simulate(serde_json::from_value(c).map_err(bad)?),
            "mc" => Resolved::Mc(serde_json::from_value(c).map_err(bad)?),
            "compare-samplers" => Resolved::Compare(serde_json::from_value(c).map_err(bad)?),
            other => return Err(CliError::Data(format!("manifest names unknown command '{other}'"))),
        })
    }

    fn execute(&self, out: &Path) -> CliResult<Outcome> {
        match self {
            Resolved::Fit(c) => fit::run(c, out),
            Resolved::Simulate(c) => simulate::run(c, out),
            Resolved::Mc(c) => mc::run(c, out),
            Resolved::Compare(c) => compare::run(c, out),
        }
    }
}

fn resolve_fit(a: FitArgs) -> CliResult<(Resolved, PathBuf)> {
    let data = fs::canonicalize(&a.data).map_err(|e| CliError::io(&a.data, e))?;
    let mut design = DesignConfig::new(&a.response, &a.shock, a.horizon, a.lags, a.spec.into())
        .controls(&a.controls)
        .ld_base(match a.ld_base {
            LdBaseArg::PreShock => LdBase::PreShock,
            LdBaseArg::Current => LdBase::Current,
        })
        .lag_instruments(a.lag_instruments);
    if !a.iv.is_empty() {
        design = design.iv(&a.iv);
    }
    let cfg = fit::FitConfig {
        data,
        design,
        prior: a.prior,
        method: a.method,
        sampler: a.sampler,
        cov: a.cov,
        chain: a.chain.config(),
        alpha: a.alpha,
        n_sim: a.n_sim,
        write_draws: a.draws,
    };
    Ok((Resolved::Fit(cfg), a.out))
}

fn resolve_simulate(a: SimulateArgs) -> (Resolved, PathBuf) {
    let mode = match a.mode {
        ModeArg::ShockObserved => VmaMode::ShockObserved,
        ModeArg::Iv => VmaMode::Iv { r: a.r, rho: a.rho, beta: a.beta },
    };
    let cfg = simulate::SimulateConfig {
        lags: a.lags,
        n_vars: a.n_vars,
        t: a.t,
        horizon: a.horizon,
        mode,
        irf_norm: match a.irf_norm {
            NormArg::Printed => IrfNormalization::Printed,
            NormArg::Unit => IrfNormalization::Unit,
        },
        seed: a.seed,
    };
    (Resolved::Simulate(cfg), a.out)
}

fn resolve_mc(a: McArgs) -> CliResult<(Resolved, PathBuf)> {
    let file = match &a.config {
        Some(p) => mc::McFile::parse(&fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
        None => mc::McFile::default(),
    };
    let flags = mc::McFile {
        t: (!a.t.is_empty()).then(|| mc::OneOrMany::Many(a.t)),
        spec: (!a.spec.is_empty()).then(|| mc::OneOrMany::Many(a.spec)),
        horizon: a.horizon,
        lags: a.lags,
        n_vars: a.n_vars,
        n_reps: a.n_reps,
        method: a.method.map(Method::from),
        cov: a.cov,
        iv: a.iv.then_some(true),
        iv_r: a.iv_r,
        iv_rho: a.iv_rho,
        iv_beta: a.iv_beta,
        alpha: a.alpha,
        n_iter: a.n_iter,
        burn_in: a.burn_in,
        shrink_limit: a.shrink_limit,
        seed: a.seed,
        n_sim: a.n_sim,
    };
    let cfg = file.overlay(flags).resolve();
    cfg.validate()?;
    Ok((Resolved::Mc(cfg), a.out))
}

fn resolve_compare(a: CompareArgs) -> (Resolved, PathBuf) {
    let cfg = CompareConfig {
        t: a.t,
        horizon: a.horizon,
        lags: a.lags,
        n_vars: a.n_vars,
        spec: a.spec.into(),
        kappa: a.kappa,
        cov_kind: a.cov.resolve(a.t),
        n_iter: a.n_iter,
        burn_in: a.burn_in,
        gess_factor: a.gess_factor,
        seed: a.seed,
        tau_shape: a.tau_shape.into(),
    };
    (Resolved::Compare(cfg), a.out)
}

fn run_resolved(
    resolved: &Resolved,
    out: &Path,
    argv: Vec<String>,
    inputs_check: Option<&RunManifest>,
) -> CliResult<()> {
    if let Some(m) = inputs_check {
        m.check_inputs()?;
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let started = now();
    let outcome = resolved.execute(out)?;
    let names: Vec<&str> = outcome.outputs.iter().map(String::as_str).collect();
    let manifest = RunManifest {
        tool: "qblp".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: resolved.name().into(),
        config: resolved.config_json(),
        seed: outcome.seed,
        argv,
        inputs: outcome.inputs,
        outputs: digests(out, &names)?,
        extra: outcome.extra,
        started,
        finished: now(),
    };
    manifest.write(out)
}

fn real_main(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let argv: Vec<String> = std::env::args().collect();
    let (resolved, out) = match cli.command {
        Command::Fit(a) => resolve_fit(a)?,
        Command::Simulate(a) => resolve_simulate(a),
        Command::Mc(a) => resolve_mc(a)?,
        Command::CompareSamplers(a) => resolve_compare(a),
        Command::Replay(a) => {
            let m = RunManifest::read(&a.manifest)?;
            let resolved = Resolved::from_manifest(&m)?;
            return run_resolved(&resolved, &a.out, m.argv.clone(), Some(&m));
        }
    };
    run_resolved(&resolved, &out, argv, None)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
