//! AO-PDS versus AO-ADMM sweeps on synthetic data.
//!
//! Every arm (algorithm x inner-iteration count) factorizes the same data
//! from the same initial factors. Each arm writes `<algo>_n<n>.csv` into the
//! output directory; the sweep finishes with `summary.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::admm::{ao_admm_factorize, AdmmConfig};
use crate::bench::synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
use crate::driver::{factorize, init_factors, DriverConfig, FitResult, StopMetric, StopReason};
use crate::error::{Error, Result};
use crate::model::{benchmark_modes, ModeSpec};
use crate::tensor::FactorSet;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Aopds,
    Aoadmm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Aopds => "aopds",
            Algorithm::Aoadmm => "aoadmm",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aopds" => Ok(Algorithm::Aopds),
            "aoadmm" => Ok(Algorithm::Aoadmm),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?}; expected aopds or aoadmm"
            ))),
        }
    }
}

/// Outer-loop settings of a sweep. Same fields as
/// [`crate::driver::DriverSettings`] minus `n_inner`, which is swept, and
/// with ground-truth MSE as the default stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepDriver {
    pub max_outer: usize,
    pub stop_tol: f64,
    pub stop_metric: StopMetric,
    pub seed: u64,
}

impl Default for SweepDriver {
    fn default() -> Self {
        Self {
            max_outer: 1000,
            stop_tol: 1e-5,
            stop_metric: StopMetric::MseVsTruth,
            seed: 0,
        }
    }
}

impl SweepDriver {
    pub fn config(&self, rank: usize, n_inner: usize) -> DriverConfig {
        DriverConfig {
            rank,
            n_inner,
            max_outer: self.max_outer,
            stop_tol: self.stop_tol,
            stop_metric: self.stop_metric,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synthetic: SyntheticSpec,
    pub driver: SweepDriver,
    pub modes: [ModeSpec; 3],
    pub admm: AdmmConfig,
    pub algorithms: Vec<Algorithm>,
    pub inner_iters: Vec<usize>,
    /// Aligned-MSE level for the time-to-threshold column.
    pub mse_threshold: Option<f64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticSpec::default(),
            driver: SweepDriver::default(),
            modes: benchmark_modes(5.0, 2.0),
            admm: AdmmConfig::default(),
            algorithms: vec![Algorithm::Aopds, Algorithm::Aoadmm],
            inner_iters: vec![3, 5, 7],
            mse_threshold: None,
            out_dir: PathBuf::from("bench_out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms must not be empty".into()));
        }
        if self.inner_iters.is_empty() {
            return Err(Error::Config("inner_iters must not be empty".into()));
        }
        for spec in &self.modes {
            spec.validate()?;
        }
        for &n in &self.inner_iters {
            self.driver.config(self.synthetic.rank, n).validate()?;
        }
        if let Some(t) = self.mse_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("mse_threshold must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// One finished arm.
#[derive(Debug, Clone)]
pub struct ArmRun {
    pub algorithm: Algorithm,
    pub n_inner: usize,
    pub fit: FitResult,
    /// Seconds around the whole factorize call, metric evaluation included.
    pub wall_clock_sec: f64,
}

pub fn run_arm(
    data: &SyntheticData,
    modes: &[ModeSpec; 3],
    cfg: &DriverConfig,
    admm: &AdmmConfig,
    algorithm: Algorithm,
) -> Result<ArmRun> {
    let truth = Some(&data.truth);
    let start = Instant::now();
    let fit = match algorithm {
        Algorithm::Aopds => factorize(&data.y, &data.mask, modes, cfg, truth)?,
        Algorithm::Aoadmm => ao_admm_factorize(&data.y, &data.mask, modes, cfg, admm, truth)?,
    };
    Ok(ArmRun {
        algorithm,
        n_inner: cfg.n_inner,
        fit,
        wall_clock_sec: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub algorithm: Algorithm,
    pub n_inner: usize,
    pub outer_iterations: usize,
    pub stop_reason: StopReason,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub best_mse_aligned: Option<f64>,
    pub best_mse_raw: Option<f64>,
    pub final_mse_aligned: Option<f64>,
    pub final_mse_raw: Option<f64>,
    pub time_to_threshold_sec: Option<f64>,
    /// Solver time at the last trace row.
    pub solver_sec: f64,
    pub wall_clock_sec: f64,
    pub trace_file: String,
}

impl ArmSummary {
    pub fn new(
        run: &ArmRun,
        initial_objective: f64,
        threshold: Option<f64>,
        trace_file: String,
    ) -> Self {
        let trace = &run.fit.trace;
        let last = trace.last();
        Self {
            algorithm: run.algorithm,
            n_inner: run.n_inner,
            outer_iterations: run.fit.outer_iterations,
            stop_reason: run.fit.stop_reason,
            initial_objective,
            final_objective: last.map_or(initial_objective, |r| r.objective),
            best_mse_aligned: trace.best_mse_aligned(),
            best_mse_raw: trace.best_mse_raw(),
            final_mse_aligned: last.and_then(|r| r.mse_aligned),
            final_mse_raw: last.and_then(|r| r.mse_raw),
            time_to_threshold_sec: threshold.and_then(|t| trace.time_to_mse(t)),
            solver_sec: last.map_or(0.0, |r| r.elapsed_sec),
            wall_clock_sec: run.wall_clock_sec,
            trace_file,
        }
    }
}

/// AO-PDS against AO-ADMM at one inner-iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub n_inner: usize,
    /// Final aligned MSE of the AO-ADMM arm.
    pub target_mse: f64,
    pub aoadmm_sec: f64,
    /// Solver time at which AO-PDS first reaches `target_mse`.
    pub aopds_sec: Option<f64>,
    /// `aopds_sec / aoadmm_sec`.
    pub time_ratio: Option<f64>,
}

pub fn speedup(pds: &FitResult, admm: &FitResult, n_inner: usize) -> Option<Speedup> {
    let last = admm.trace.last()?;
    let target_mse = last.mse_aligned?;
    let aoadmm_sec = last.elapsed_sec;
    let aopds_sec = pds.trace.time_to_mse(target_mse);
    Some(Speedup {
        n_inner,
        target_mse,
        aoadmm_sec,
        aopds_sec,
        time_ratio: aopds_sec.map(|t| t / aoadmm_sec.max(f64::MIN_POSITIVE)),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
    pub available_parallelism: usize,
    pub debug_build: bool,
}

impl Environment {
    pub fn capture() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            debug_build: cfg!(debug_assertions),
        }
    }
}

/// 64-bit FNV-1a digests (hex) of the inputs every arm shares.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFingerprint {
    pub data: String,
    pub truth: String,
    pub init: String,
}

pub fn fnv1a(words: impl IntoIterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn factor_digest(f: &FactorSet) -> u64 {
    fnv1a(f.factors().iter().flat_map(|m| m.iter().copied()))
}

impl DataFingerprint {
    pub fn new(data: &SyntheticData, init: &FactorSet) -> Self {
        Self {
            data: format!("{:016x}", fnv1a(data.y.as_slice().iter().copied())),
            truth: format!("{:016x}", factor_digest(&data.truth)),
            init: format!("{:016x}", factor_digest(init)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub environment: Environment,
    pub fingerprint: DataFingerprint,
    pub arms: Vec<ArmSummary>,
    pub speedups: Vec<Speedup>,
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn trace_file_name(algorithm: Algorithm, n_inner: usize) -> String {
    format!("{}_n{}.csv", algorithm.name(), n_inner)
}

/// Runs every arm, writes the traces and `summary.json` into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let data = generate_synthetic(&cfg.synthetic)?;
    let rank = cfg.synthetic.rank;
    let init = init_factors(cfg.synthetic.dims, rank, cfg.driver.seed)?;
    let initial_objective = crate::model::objective(&data.y, &data.mask, &init, &cfg.modes)?;

    let mut arms = Vec::new();
    let mut speedups = Vec::new();
    for &n in &cfg.inner_iters {
        let driver = cfg.driver.config(rank, n);
        let mut runs = Vec::new();
        for &algorithm in &cfg.algorithms {
            let run = run_arm(&data, &cfg.modes, &driver, &cfg.admm, algorithm)?;
            let file = trace_file_name(algorithm, n);
            run.fit.trace.save(&cfg.out_dir.join(&file))?;
            arms.push(ArmSummary::new(&run, initial_objective, cfg.mse_threshold, file));
            runs.push(run);
        }
        let find = |a: Algorithm| runs.iter().find(|r| r.algorithm == a);
        if let (Some(p), Some(a)) = (find(Algorithm::Aopds), find(Algorithm::Aoadmm)) {
            speedups.extend(speedup(&p.fit, &a.fit, n));
        }
    }

    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        config: cfg.clone(),
        environment: Environment::capture(),
        fingerprint: DataFingerprint::new(&data, &init),
        arms,
        speedups,
    };
    std::fs::write(cfg.out_dir.join(SUMMARY_FILE), summary.to_json()?)?;
    Ok(summary)
}
