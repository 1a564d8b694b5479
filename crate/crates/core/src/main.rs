use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use aopds::admm::{ao_admm_factorize, AdmmConfig};
use aopds::bench::experiment::{run_experiment, Algorithm, ExperimentConfig};
use aopds::bench::io::{load_factors, load_mask, load_tensor, save_factors, save_mask, save_tensor};
use aopds::bench::report;
use aopds::bench::synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
use aopds::driver::{factorize, DriverSettings, FitResult};
use aopds::model::benchmark_modes;
use aopds::{Error, FactorSet, Mask, ModeSpec, Result, Tensor3};

#[derive(Parser)]
#[command(name = "aopds", version, about = "Constrained CP decomposition by AO-PDS and AO-ADMM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic tensor, mask and ground-truth factors.
    Generate(GenerateArgs),
    /// Run one algorithm on tensor files or a synthetic problem.
    Factorize(FactorizeArgs),
    /// Run an AO-PDS / AO-ADMM sweep.
    Bench(BenchArgs),
    /// Summarize trace CSVs as a table.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for both the synthetic data and the initialization.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FactorizeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "aopds")]
    algo: Algorithm,
    #[arg(long)]
    inner_iters: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Restrict the sweep to these algorithms.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<Algorithm>,
    #[arg(long, value_delimiter = ',')]
    inner_iters: Vec<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Trace CSV files or directories containing them.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Aligned-MSE level for the time-to-threshold column.
    #[arg(long)]
    threshold: Option<f64>,
}

fn read_toml<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
        None => Ok(T::default()),
    }
}

/// Config of `generate`: a bare synthetic spec.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateConfig {
    synthetic: SyntheticSpec,
}

fn generate(args: GenerateArgs) -> Result<()> {
    let c = args.common;
    let mut spec = read_toml::<GenerateConfig>(c.config.as_deref())?.synthetic;
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    if let Some(rank) = c.rank {
        spec.rank = rank;
    }
    let out = c.out_dir.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    let data = generate_synthetic(&spec)?;
    save_tensor(&out.join("y.tns"), &data.y)?;
    save_mask(&out.join("mask.msk"), &data.mask)?;
    save_factors(&out.join("truth.json"), &data.truth)?;
    println!("wrote y.tns, mask.msk, truth.json to {}", out.display());
    Ok(())
}

/// Config of `factorize`. The data come either from `tensor` (plus optional
/// `mask` and `truth`) or from `[synthetic]`.
#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FactorizeConfig {
    rank: Option<usize>,
    tensor: Option<PathBuf>,
    mask: Option<PathBuf>,
    truth: Option<PathBuf>,
    synthetic: Option<SyntheticSpec>,
    driver: DriverSettings,
    modes: [ModeSpec; 3],
    admm: AdmmConfig,
}

impl Default for FactorizeConfig {
    fn default() -> Self {
        Self {
            rank: None,
            tensor: None,
            mask: None,
            truth: None,
            synthetic: None,
            driver: DriverSettings::default(),
            modes: benchmark_modes(5.0, 2.0),
            admm: AdmmConfig::default(),
        }
    }
}

fn load_problem(cfg: &FactorizeConfig, seed: Option<u64>) -> Result<(Tensor3, Mask, Option<FactorSet>)> {
    match (&cfg.tensor, &cfg.synthetic) {
        (Some(path), None) => {
            let y = load_tensor(path)?;
            let mask = match &cfg.mask {
                Some(m) => load_mask(m)?,
                None => Mask::all(y.dims())?,
            };
            let truth = cfg.truth.as_deref().map(load_factors).transpose()?;
            Ok((y, mask, truth))
        }
        (None, spec) => {
            let mut spec = spec.unwrap_or_default();
            if let Some(s) = seed {
                spec.seed = s;
            }
            let SyntheticData { y, truth, mask } = generate_synthetic(&spec)?;
            Ok((y, mask, Some(truth)))
        }
        (Some(_), Some(_)) => Err(Error::Config(
            "give either `tensor` or `[synthetic]`, not both".into(),
        )),
    }
}

fn factorize_cmd(args: FactorizeArgs) -> Result<()> {
    let c = args.common;
    let cfg: FactorizeConfig = read_toml(c.config.as_deref())?;
    let (y, mask, truth) = load_problem(&cfg, c.seed)?;
    let rank = c
        .rank
        .or(cfg.rank)
        .or(truth.as_ref().map(FactorSet::rank))
        .ok_or_else(|| Error::Config("rank is required without ground truth".into()))?;
    let mut settings = cfg.driver;
    if let Some(seed) = c.seed {
        settings.seed = seed;
    }
    if let Some(n) = args.inner_iters {
        settings.n_inner = n;
    }
    let driver = settings.with_rank(rank);
    let fit: FitResult = match args.algo {
        Algorithm::Aopds => factorize(&y, &mask, &cfg.modes, &driver, truth.as_ref())?,
        Algorithm::Aoadmm => {
            ao_admm_factorize(&y, &mask, &cfg.modes, &driver, &cfg.admm, truth.as_ref())?
        }
    };
    let out = c.out_dir.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)?;
    fit.trace.save(&out.join("trace.csv"))?;
    save_factors(&out.join("factors.json"), &fit.factors)?;
    let last = fit.trace.last();
    println!(
        "{}: {} outer iterations ({:?}), objective {:.6e}{}",
        args.algo.name(),
        fit.outer_iterations,
        fit.stop_reason,
        last.map_or(f64::NAN, |r| r.objective),
        fit.trace
            .best_mse_aligned()
            .map_or(String::new(), |m| format!(", best aligned MSE {m:.6}")),
    );
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let c = args.common;
    let mut cfg: ExperimentConfig = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.synthetic.seed = seed;
        cfg.driver.seed = seed;
    }
    if let Some(rank) = c.rank {
        cfg.synthetic.rank = rank;
    }
    if let Some(out) = c.out_dir {
        cfg.out_dir = out;
    }
    if !args.algo.is_empty() {
        cfg.algorithms = args.algo;
    }
    if !args.inner_iters.is_empty() {
        cfg.inner_iters = args.inner_iters;
    }
    let summary = run_experiment(&cfg)?;
    for arm in &summary.arms {
        println!(
            "{} n={}: {} outer ({:?}), best aligned MSE {}, solver {:.2}s",
            arm.algorithm.name(),
            arm.n_inner,
            arm.outer_iterations,
            arm.stop_reason,
            arm.best_mse_aligned.map_or("-".into(), |m| format!("{m:.4}")),
            arm.solver_sec,
        );
    }
    for s in &summary.speedups {
        println!(
            "n={}: AO-PDS reaches AO-ADMM final MSE {:.4} at ratio {}",
            s.n_inner,
            s.target_mse,
            s.time_ratio.map_or("never".into(), |r| format!("{r:.3}")),
        );
    }
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let rows = report::collect(&args.traces, args.threshold)?;
    print!("{}", report::render(&rows));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Factorize(a) => factorize_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
