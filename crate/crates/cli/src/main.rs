use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use fracvar::constants::ConstantsTable;
use fracvar::fractrans::{
    counterexample_operator, FracTransform, FundamentalMartingale, InverseFracTransform, PathOperator, Reconstruction,
};
use fracvar::io::{load_ensemble, load_json, save_ensemble, save_json, to_json};
use fracvar::levytest::{levy_characterization_test, LevyConfig};
use fracvar::simulate::DEFAULT_TAIL_LEN;
use fracvar::variation::{beta_variation_estimate, hurst_estimate, Sample, VerdictRule};
use fracvar::{run_experiment, Error, Execution, ExperimentConfig, FracOrder, Grid, HurstParam, Process, SingularFunction, EXPERIMENTS};

/// Environment variable that overrides `--seed`.
const SEED_ENV: &str = "FRACVAR_SEED";

#[derive(Parser, Debug)]
#[command(name = "fracvar", version, about = "Fractional martingale transforms and beta-variation statistics")]
struct Cli {
    /// Master seed (overridden by FRACVAR_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Base directory for relative output paths.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print kappa, c_H, c_alpha, d_H and beta as JSON.
    Constants {
        #[arg(long)]
        hurst: f64,
    },
    /// Sample an ensemble and write it as CSV.
    Simulate(SimulateArgs),
    /// Apply a path operator to every column of an ensemble.
    Transform(TransformArgs),
    /// beta-variation across a partition schedule.
    Variation(VariationArgs),
    /// Estimate the Hurst parameter of an ensemble.
    Hurst {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_pair)]
        interval: Option<(f64, f64)>,
        /// Also report the regression cross-check.
        #[arg(long)]
        regression: bool,
    },
    /// Run the characterization battery on an ensemble.
    Levytest {
        #[arg(long)]
        hurst: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a named experiment.
    Experiment {
        /// Experiment name; `list` prints the available names.
        name: String,
        /// JSON object overriding the experiment's defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        show_config: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProcessKind {
    Bm,
    FbmChol,
    FbmMvn,
    FbmVolterra,
    Tcbm,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    process: ProcessKind,
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 1)]
    paths: usize,
    #[arg(long, default_value_t = DEFAULT_TAIL_LEN)]
    tail_len: f64,
    #[arg(long, default_value_t = 0.3)]
    cascade_p: f64,
    #[arg(long, default_value_t = 14)]
    cascade_depth: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OpKind {
    Frac,
    Invfrac,
    Fundamental,
    Reconstruct,
    CounterexampleY,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[arg(long, value_enum)]
    op: OpKind,
    #[arg(long, conflicts_with = "hurst")]
    alpha: Option<f64>,
    #[arg(long)]
    hurst: Option<f64>,
    /// Keep every `stride`-th output point.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VariationArgs {
    #[arg(long)]
    beta: f64,
    #[arg(long, value_parser = parse_pair)]
    interval: (f64, f64),
    #[arg(long, value_delimiter = ',', required = true)]
    schedule: Vec<usize>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected A,B, got `{s}`"))?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

struct Ctx {
    /// `None` keeps an experiment's own default seed; elsewhere it means 0.
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
}

impl Ctx {
    fn out(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(d) => d.join(p),
            None => p.to_path_buf(),
        }
    }
}

enum Failure {
    /// Bad arguments or unknown names; exit code 2.
    Usage(String),
    /// Library or I/O error; exit code 2.
    Error(Error),
    /// Ran to completion but a criterion failed; exit code 1.
    Failed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownExperiment(_) => Failure::Usage(e.to_string()),
            e => Failure::Error(e),
        }
    }
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required here")))
}

fn write_json_out(v: &impl serde::Serialize, path: Option<PathBuf>) -> Result<(), Failure> {
    match path {
        Some(p) => save_json(v, &p)?,
        None => println!("{}", to_json(v)?),
    }
    Ok(())
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<(), Failure> {
    let process = match a.process {
        ProcessKind::Bm => Process::Brownian,
        ProcessKind::FbmChol => Process::FbmCholesky { hurst: HurstParam::new(need(a.hurst, "hurst")?)? },
        ProcessKind::FbmVolterra => Process::FbmVolterra { hurst: HurstParam::new(need(a.hurst, "hurst")?)? },
        ProcessKind::FbmMvn => {
            let alpha = match (a.alpha, a.hurst) {
                (Some(al), _) => FracOrder::new(al)?,
                (None, Some(h)) => HurstParam::new(h)?.frac_order(),
                (None, None) => return Err(Failure::Usage("--alpha or --hurst is required for fbm-mvn".into())),
            };
            Process::FbmMvn { alpha, tail_len: a.tail_len }
        }
        ProcessKind::Tcbm => Process::TimeChangedBm { cascade: SingularFunction::new(a.cascade_p, a.cascade_depth)? },
    };
    let e = process.sampler(Grid::horizon(a.n, a.t)?)?.ensemble(a.paths, ctx.seed.unwrap_or(0), Execution::Parallel)?;
    save_ensemble(&e, &ctx.out(&a.out))?;
    Ok(())
}

fn transform(ctx: &Ctx, a: TransformArgs) -> Result<(), Failure> {
    let e = load_ensemble(&a.input)?;
    let (n, dt) = (e.grid.n, e.grid.dt);
    let hurst = || -> Result<HurstParam, Failure> { Ok(HurstParam::new(need(a.hurst, "hurst")?)?) };
    let alpha = || -> Result<FracOrder, Failure> { Ok(FracOrder::new(need(a.alpha, "alpha")?)?) };
    let op: Box<dyn PathOperator> = match a.op {
        OpKind::Frac => Box::new(FracTransform::new(alpha()?, n, dt)),
        OpKind::Invfrac => Box::new(InverseFracTransform::new(alpha()?, n, dt)),
        OpKind::Fundamental => Box::new(FundamentalMartingale::new(hurst()?, n, dt)),
        OpKind::Reconstruct => Box::new(Reconstruction::new(hurst()?, n, dt)),
        OpKind::CounterexampleY => Box::new(counterexample_operator(hurst()?, n, dt)?),
    };
    let out = op.apply_ensemble(&e, a.stride, Execution::Parallel)?;
    save_ensemble(&out, &ctx.out(&a.out))?;
    Ok(())
}

fn variation(ctx: &Ctx, a: VariationArgs) -> Result<(), Failure> {
    let e = load_ensemble(&a.input)?;
    let est = beta_variation_estimate(Sample::Mean(&e), a.beta, a.interval, &a.schedule, VerdictRule::default(), Execution::Parallel)?;
    write_json_out(&est, a.report.map(|p| ctx.out(&p)))
}

fn levytest(ctx: &Ctx, hurst: f64, input: PathBuf, config: Option<PathBuf>, report: Option<PathBuf>) -> Result<(), Failure> {
    let h = HurstParam::new(hurst)?;
    let cfg: LevyConfig = match config {
        Some(p) => load_json(&p)?,
        None => LevyConfig::default(),
    };
    let mut e = load_ensemble(&input)?;
    e.master_seed = ctx.seed.unwrap_or(0);
    let r = levy_characterization_test(&e, h, &cfg, Execution::Parallel);
    for c in &r.criteria {
        eprintln!("{:<12} {:?} statistic={:.6} {}", c.name, c.verdict, c.statistic, c.detail);
    }
    write_json_out(&r, report.map(|p| ctx.out(&p)))?;
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::Failed)
    }
}

fn experiment(ctx: &Ctx, name: String, config: Option<PathBuf>, show_config: bool) -> Result<(), Failure> {
    if name == "list" {
        EXPERIMENTS.iter().for_each(|n| println!("{n}"));
        return Ok(());
    }
    if !EXPERIMENTS.contains(&name.as_str()) {
        return Err(Failure::Usage(format!("unknown experiment `{name}`; known: {}", EXPERIMENTS.join(", "))));
    }
    let mut over: Value = match config {
        Some(p) => load_json(&p)?,
        None => Value::Object(Default::default()),
    };
    if !over.is_object() {
        return Err(Failure::Usage("experiment config must be a JSON object".into()));
    }
    if let Some(s) = ctx.seed {
        over["seed"] = s.into();
    }
    let mut cfg = ExperimentConfig::with_overrides(&name, &over)?;
    if let Some(d) = &ctx.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    if show_config {
        println!("{}", to_json(&cfg)?);
        return Ok(());
    }
    let out = run_experiment(&cfg, Execution::Parallel)?;
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    for p in out.write(&dir, &name)? {
        eprintln!("wrote {}", p.display());
    }
    for c in &out.report.criteria {
        println!("{:<5} {:<32} statistic={:.6} {}", if c.passed() { "PASS" } else { "FAIL" }, c.name, c.statistic, c.detail);
    }
    if out.passed() {
        Ok(())
    } else {
        Err(Failure::Failed)
    }
}

fn seed(flag: Option<u64>) -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| Failure::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    #[cfg(feature = "parallel")]
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot set up {} threads: {e}", cli.threads)))?;
    }
    let ctx = Ctx { seed: seed(cli.seed)?, out_dir: cli.out_dir };
    if let Some(d) = &ctx.out_dir {
        std::fs::create_dir_all(d).map_err(|e| Failure::Error(Error::Io { path: d.clone(), source: e }))?;
    }
    match cli.cmd {
        Cmd::Constants { hurst } => write_json_out(&ConstantsTable::new(HurstParam::new(hurst)?), None),
        Cmd::Simulate(a) => simulate(&ctx, a),
        Cmd::Transform(a) => transform(&ctx, a),
        Cmd::Variation(a) => variation(&ctx, a),
        Cmd::Hurst { input, interval, regression } => {
            let e = load_ensemble(&input)?;
            let iv = interval.unwrap_or((e.grid.t0, e.grid.end()));
            write_json_out(&hurst_estimate(Sample::Mean(&e), iv, regression, Execution::Parallel)?, None)
        }
        Cmd::Levytest { hurst, input, config, report } => levytest(&ctx, hurst, input, config, report),
        Cmd::Experiment { name, config, show_config } => experiment(&ctx, name, config, show_config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
