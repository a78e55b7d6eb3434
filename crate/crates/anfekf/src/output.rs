//! CSV artifacts. Each file starts with a `#` comment line carrying the
//! schema name and version; readers should skip `#` lines.

use std::fs;
use std::io::Write;
use std::path::Path;

use anfekf_core::metrics::{EnsembleReport, RunSummaryRow};
use anfekf_core::sim::RunLog;

use crate::{AppError, Result};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const RUNS_COLUMNS: [&str; 21] = [
    "run",
    "step",
    "t",
    "truth_x",
    "truth_y",
    "truth_phi",
    "est_x",
    "est_y",
    "est_phi",
    "P11",
    "P22",
    "P33",
    "nees",
    "n_meas",
    "n_gated",
    "R11",
    "R22",
    "Q11",
    "Q22",
    "dom11",
    "dom22",
];

pub const REPORT_COLUMNS: [&str; 6] = ["step", "t", "rmse_pos", "avg_nees", "band_lo", "band_hi"];

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "run",
    "seed",
    "rmse_pos",
    "rmse_heading",
    "mean_nees",
    "accepted",
    "gated",
    "timed_out",
];

pub const COMPARE_COLUMNS: [&str; 8] = [
    "step",
    "t",
    "rmse_pos_a",
    "rmse_pos_b",
    "avg_nees_a",
    "avg_nees_b",
    "band_lo",
    "band_hi",
];

pub const PAIRED_COLUMNS: [&str; 5] = ["run", "seed", "rmse_pos_a", "rmse_pos_b", "delta"];

pub const DELTA_COLUMNS: [&str; 4] = ["metric", "a", "b", "delta"];

/// Column reference printed by `--help`.
pub const COLUMN_HELP: &str = "\
Output files (all CSV, first line is a '#' schema comment, angles in radians):
  runs.csv     one row per run and control step:
               run, step, t [s], truth_x, truth_y [m], truth_phi [rad],
               est_x, est_y [m], est_phi [rad], P11, P22 [m^2], P33 [rad^2],
               nees, n_meas (scan size), n_gated (rejected by the gate),
               R11 [m^2], R22 [rad^2], Q11 [(m/s)^2], Q22 [rad^2],
               dom11, dom22 (latest degree of mismatch, S - C, per channel)
  report.csv   one row per step over the ensemble:
               step, t, rmse_pos [m], avg_nees, band_lo, band_hi (95% chi-square band)
  summary.csv  one row per run:
               run, seed, rmse_pos [m], rmse_heading [rad], mean_nees,
               accepted, gated, timed_out
  compare.csv  (compare only) step, t, rmse_pos_a, rmse_pos_b, avg_nees_a,
               avg_nees_b, band_lo, band_hi
  paired.csv   (compare only) run, seed, rmse_pos_a, rmse_pos_b, delta (b - a)
  deltas.csv   (compare only) metric, a, b, delta (b - a) for time_avg_rmse,
               median_run_rmse, in_band_fraction, mean_avg_nees, runs_b_better
  meta.txt     wall-clock timestamp and arguments; the only non-deterministic file";

fn writer(dir: &Path, name: &str, schema: &str, columns: &[&str]) -> Result<csv::Writer<fs::File>> {
    let path = dir.join(name);
    let mut file = fs::File::create(&path).map_err(|source| AppError::Io {
        path: path.clone(),
        source,
    })?;
    writeln!(file, "# anfekf {schema} schema {CSV_SCHEMA_VERSION}")
        .map_err(|source| AppError::Io { path, source })?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(columns)?;
    Ok(w)
}

fn f(v: f64) -> String {
    v.to_string()
}

pub fn write_runs(dir: &Path, logs: &[RunLog]) -> Result<()> {
    let mut w = writer(dir, "runs.csv", "runs", &RUNS_COLUMNS)?;
    for (run, log) in logs.iter().enumerate() {
        for s in &log.steps {
            let m = s.estimate.mean();
            let p = s.estimate.cov();
            w.write_record([
                run.to_string(),
                s.step.to_string(),
                f(s.t),
                f(s.truth.x()),
                f(s.truth.y()),
                f(s.truth.phi()),
                f(m[0]),
                f(m[1]),
                f(m[2]),
                f(p[(0, 0)]),
                f(p[(1, 1)]),
                f(p[(2, 2)]),
                f(s.nees),
                s.n_meas.to_string(),
                s.n_gated.to_string(),
                f(s.r[0]),
                f(s.r[1]),
                f(s.q[0]),
                f(s.q[1]),
                f(s.adaptation.dom[0]),
                f(s.adaptation.dom[1]),
            ])?;
        }
    }
    w.flush().map_err(|source| AppError::Io {
        path: dir.join("runs.csv"),
        source,
    })
}

pub fn write_report(dir: &Path, report: &EnsembleReport) -> Result<()> {
    let mut w = writer(dir, "report.csv", "report", &REPORT_COLUMNS)?;
    for (k, t) in report.t.iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            f(*t),
            f(report.rmse_pos[k]),
            f(report.avg_nees[k]),
            f(report.band.0),
            f(report.band.1),
        ])?;
    }
    w.flush().map_err(|source| AppError::Io {
        path: dir.join("report.csv"),
        source,
    })
}

pub fn write_summary(dir: &Path, rows: &[RunSummaryRow]) -> Result<()> {
    let mut w = writer(dir, "summary.csv", "summary", &SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            f(r.rmse_pos),
            f(r.rmse_heading),
            f(r.mean_nees),
            r.accepted.to_string(),
            r.gated.to_string(),
            r.timed_out.to_string(),
        ])?;
    }
    w.flush().map_err(|source| AppError::Io {
        path: dir.join("summary.csv"),
        source,
    })
}

/// Headline numbers of a paired comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSummary {
    pub time_avg_rmse: (f64, f64),
    pub median_run_rmse: (f64, f64),
    pub in_band_fraction: (f64, f64),
    pub mean_avg_nees: (f64, f64),
    /// Runs where b's time-averaged RMSE is strictly lower than a's.
    pub runs_b_better: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ComparisonSummary {
    pub fn new(a: &EnsembleReport, b: &EnsembleReport) -> Self {
        let med = |r: &EnsembleReport| median(r.runs.iter().map(|x| x.rmse_pos).collect());
        Self {
            time_avg_rmse: (a.time_averaged_rmse(), b.time_averaged_rmse()),
            median_run_rmse: (med(a), med(b)),
            in_band_fraction: (a.in_band_fraction, b.in_band_fraction),
            mean_avg_nees: (
                anfekf_core::metrics::mean(&a.avg_nees),
                anfekf_core::metrics::mean(&b.avg_nees),
            ),
            runs_b_better: a
                .runs
                .iter()
                .zip(&b.runs)
                .filter(|(x, y)| y.rmse_pos < x.rmse_pos)
                .count(),
        }
    }
}

pub fn write_comparison(
    dir: &Path,
    a: &EnsembleReport,
    b: &EnsembleReport,
) -> Result<ComparisonSummary> {
    let mut w = writer(dir, "compare.csv", "compare", &COMPARE_COLUMNS)?;
    for (k, t) in a.t.iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            f(*t),
            f(a.rmse_pos[k]),
            f(b.rmse_pos[k]),
            f(a.avg_nees[k]),
            f(b.avg_nees[k]),
            f(a.band.0),
            f(a.band.1),
        ])?;
    }
    w.flush().map_err(|source| AppError::Io {
        path: dir.join("compare.csv"),
        source,
    })?;

    let mut w = writer(dir, "paired.csv", "paired", &PAIRED_COLUMNS)?;
    for (x, y) in a.runs.iter().zip(&b.runs) {
        w.write_record([
            x.run.to_string(),
            x.seed.to_string(),
            f(x.rmse_pos),
            f(y.rmse_pos),
            f(y.rmse_pos - x.rmse_pos),
        ])?;
    }
    w.flush().map_err(|source| AppError::Io {
        path: dir.join("paired.csv"),
        source,
    })?;

    let summary = ComparisonSummary::new(a, b);
    let mut w = writer(dir, "deltas.csv", "deltas", &DELTA_COLUMNS)?;
    let rows = [
        ("time_avg_rmse", summary.time_avg_rmse),
        ("median_run_rmse", summary.median_run_rmse),
        ("in_band_fraction", summary.in_band_fraction),
        ("mean_avg_nees", summary.mean_avg_nees),
    ];
    for (name, (x, y)) in rows {
        w.write_record([name.to_string(), f(x), f(y), f(y - x)])?;
    }
    let n = a.runs.len();
    let b_better = summary.runs_b_better;
    let a_better = b
        .runs
        .iter()
        .zip(&a.runs)
        .filter(|(y, x)| x.rmse_pos < y.rmse_pos)
        .count();
    w.write_record([
        "runs_b_better".to_string(),
        a_better.to_string(),
        b_better.to_string(),
        (b_better as i64 - a_better as i64).to_string(),
    ])?;
    debug_assert!(a_better + b_better <= n);
    w.flush().map_err(|source| AppError::Io {
        path: dir.join("deltas.csv"),
        source,
    })?;
    Ok(summary)
}
