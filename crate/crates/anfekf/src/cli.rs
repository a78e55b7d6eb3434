//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anfekf_core::adaptation::AdaptConfig;
use anfekf_core::metrics::EnsembleReport;
use anfekf_core::sim::{Scenario, Variant};
use clap::{Args, Parser, Subcommand};

use crate::output::{self, COLUMN_HELP};
use crate::scenario_file::ScenarioFile;
use crate::{run_monte_carlo, AppError, Result};

/// Confidence of the NEES band written to the reports.
pub const BAND_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Parser)]
#[command(
    name = "anfekf",
    version,
    about = "Monte Carlo experiments for EKF and ANFIS-adaptive EKF localization"
)]
#[command(after_long_help = COLUMN_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one filter variant over a Monte Carlo ensemble.
    #[command(after_long_help = COLUMN_HELP)]
    Run {
        #[arg(long, default_value = "ekf")]
        variant: Variant,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run two variants on the same seeds and write a paired report.
    #[command(after_long_help = COLUMN_HELP)]
    Compare {
        #[arg(long, default_value = "ekf")]
        variant_a: Variant,
        #[arg(long, default_value = "anfekf-r")]
        variant_b: Variant,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write the built-in scenario as TOML (stdout when --out is omitted).
    ScenarioDefault {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario TOML file (see `scenario-default`).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Number of Monte Carlo runs.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// Base seed; run i uses seed + i. Defaults to the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Residual window length, at least 2.
    #[arg(long)]
    pub window: Option<usize>,
    /// ANFIS learning rate in (0, 1].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Lower bound on the R diagonal, > 0.
    #[arg(long)]
    pub r_floor: Option<f64>,
    /// Lower bound on the Q diagonal as a fraction of its initial value, in (0, 1].
    #[arg(long)]
    pub q_floor: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Fully resolved experiment inputs.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub cfg: AdaptConfig,
    pub n_runs: usize,
    pub base_seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<ExperimentSpec> {
        let file = ScenarioFile::load(&self.scenario)?;
        let scenario = file.to_scenario()?;
        let mut cfg = file.adapt_config()?;
        if let Some(n) = self.window {
            if n < 2 {
                return Err(AppError::InvalidConfig(format!(
                    "--window must be at least 2, got {n}"
                )));
            }
            cfg.window = n;
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(AppError::InvalidConfig(format!(
                    "--eta must lie in (0, 1], got {eta}"
                )));
            }
            cfg.learning_rate = eta;
        }
        if let Some(f) = self.r_floor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(AppError::InvalidConfig(format!(
                    "--r-floor must be positive, got {f}"
                )));
            }
            cfg.r_floor = f;
        }
        if let Some(f) = self.q_floor {
            if !(f > 0.0 && f <= 1.0) {
                return Err(AppError::InvalidConfig(format!(
                    "--q-floor must lie in (0, 1], got {f}"
                )));
            }
            cfg.q_floor_factor = f;
        }
        cfg.validate()?;
        if self.runs == 0 {
            return Err(AppError::InvalidConfig("--runs must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(AppError::InvalidConfig(
                "--threads must be at least 1".into(),
            ));
        }
        Ok(ExperimentSpec {
            base_seed: self.seed.unwrap_or(scenario.seed),
            scenario,
            cfg,
            n_runs: self.runs,
            out: self.out.clone(),
            threads: self.threads,
        })
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| AppError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_meta(dir: &Path, lines: &[String]) -> Result<()> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = format!("created_unix = {stamp}\n");
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    let path = dir.join("meta.txt");
    fs::write(&path, text).map_err(|source| AppError::Io { path, source })
}

fn spec_lines(spec: &ExperimentSpec, scenario_path: &Path) -> Vec<String> {
    vec![
        format!("scenario = {}", scenario_path.display()),
        format!("runs = {}", spec.n_runs),
        format!("base_seed = {}", spec.base_seed),
        format!("window = {}", spec.cfg.window),
        format!("eta = {}", spec.cfg.learning_rate),
        format!("r_floor = {}", spec.cfg.r_floor),
        format!("q_floor_factor = {}", spec.cfg.q_floor_factor),
    ]
}

pub fn cmd_run(variant: Variant, common: &CommonArgs) -> Result<EnsembleReport> {
    let spec = common.resolve()?;
    let logs = run_monte_carlo(
        &spec.scenario,
        variant,
        &spec.cfg,
        spec.n_runs,
        spec.base_seed,
        spec.threads,
    )?;
    let report = EnsembleReport::build(&logs, BAND_CONFIDENCE)?;
    prepare_dir(&spec.out)?;
    output::write_runs(&spec.out, &logs)?;
    output::write_report(&spec.out, &report)?;
    output::write_summary(&spec.out, &report.runs)?;
    let mut meta = vec![format!("command = run"), format!("variant = {variant}")];
    meta.extend(spec_lines(&spec, &common.scenario));
    write_meta(&spec.out, &meta)?;
    Ok(report)
}

pub fn cmd_compare(
    a: Variant,
    b: Variant,
    common: &CommonArgs,
) -> Result<output::ComparisonSummary> {
    let spec = common.resolve()?;
    let run = |v| {
        run_monte_carlo(
            &spec.scenario,
            v,
            &spec.cfg,
            spec.n_runs,
            spec.base_seed,
            spec.threads,
        )
    };
    let ra = EnsembleReport::build(&run(a)?, BAND_CONFIDENCE)?;
    let rb = EnsembleReport::build(&run(b)?, BAND_CONFIDENCE)?;
    prepare_dir(&spec.out)?;
    let summary = output::write_comparison(&spec.out, &ra, &rb)?;
    let mut meta = vec![
        format!("command = compare"),
        format!("variant_a = {a}"),
        format!("variant_b = {b}"),
    ];
    meta.extend(spec_lines(&spec, &common.scenario));
    write_meta(&spec.out, &meta)?;
    Ok(summary)
}

pub fn cmd_scenario_default(out: Option<&Path>) -> Result<()> {
    let file = ScenarioFile::builtin();
    match out {
        Some(path) => file.save(path),
        None => {
            print!("{}", file.to_toml()?);
            Ok(())
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { variant, common } => {
            let r = cmd_run(*variant, common)?;
            println!(
                "{variant}: {} runs, time-averaged position RMSE {:.4} m, NEES in band {:.0}%",
                r.runs.len(),
                r.time_averaged_rmse(),
                100.0 * r.in_band_fraction
            );
        }
        Command::Compare {
            variant_a,
            variant_b,
            common,
        } => {
            let s = cmd_compare(*variant_a, *variant_b, common)?;
            println!(
                "time-averaged RMSE {variant_a} {:.4} m, {variant_b} {:.4} m; {variant_b} better in {}/{} runs",
                s.time_avg_rmse.0, s.time_avg_rmse.1, s.runs_b_better, common.runs
            );
            println!(
                "NEES in band {variant_a} {:.0}%, {variant_b} {:.0}%",
                100.0 * s.in_band_fraction.0,
                100.0 * s.in_band_fraction.1
            );
        }
        Command::ScenarioDefault { out } => cmd_scenario_default(out.as_deref())?,
    }
    Ok(())
}
