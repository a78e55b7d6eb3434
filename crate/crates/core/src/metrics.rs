//! Ensemble error metrics: position RMSE, NEES and chi-square bands.

use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::ekf::GaussianState;
use crate::models::{wrap_angle, Pose};
use crate::sim::RunLog;
use crate::special::chi2_quantile;
use crate::{Error, Result};

/// Dimension of the pose state.
pub const STATE_DIM: usize = 3;

/// Normalized estimation error squared `eᵀ P⁻¹ e`, `e = truth - estimate`
/// with the heading difference wrapped.
pub fn nees(truth: &Pose, est: &GaussianState) -> Result<f64> {
    let m = est.mean();
    let e = nalgebra::Vector3::new(
        truth.x() - m[0],
        truth.y() - m[1],
        wrap_angle(truth.phi() - m[2]),
    );
    let p_inv = est
        .cov()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularCovariance)?;
    Ok((e.transpose() * p_inv * e)[0].max(0.0))
}

/// Two-sided probability region of the average NEES of `n_runs` consistent
/// runs: `[χ²_{(1-c)/2}(N d) / N, χ²_{(1+c)/2}(N d) / N]`.
pub fn chi2_band(n_runs: usize, state_dim: usize, confidence: f64) -> Result<(f64, f64)> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfidence(confidence));
    }
    if n_runs == 0 || state_dim == 0 {
        return Err(Error::InvalidArgument(
            "chi-square band needs n_runs and state_dim >= 1",
        ));
    }
    let n = n_runs as f64;
    let dof = n * state_dim as f64;
    let lo = chi2_quantile(dof, 0.5 * (1.0 - confidence));
    let hi = chi2_quantile(dof, 0.5 * (1.0 + confidence));
    Ok((lo / n, hi / n))
}

fn common_len(logs: &[RunLog]) -> Result<usize> {
    let first = logs
        .first()
        .ok_or(Error::InvalidArgument("need at least one run log"))?
        .steps
        .len();
    for log in logs {
        if log.steps.len() != first {
            return Err(Error::MismatchedLogs(first, log.steps.len()));
        }
    }
    Ok(first)
}

/// Pointwise mean over runs of the NEES series.
pub fn average_nees(logs: &[RunLog]) -> Result<Vec<f64>> {
    let len = common_len(logs)?;
    let mut acc = vec![0.0; len];
    for log in logs {
        for (a, s) in acc.iter_mut().zip(&log.steps) {
            *a += s.nees;
        }
    }
    let n = logs.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

fn rms_over_runs(
    logs: &[RunLog],
    sq_err: impl Fn(&crate::sim::StepRecord) -> f64,
) -> Result<Vec<f64>> {
    let len = common_len(logs)?;
    let mut acc = vec![0.0; len];
    for log in logs {
        for (a, s) in acc.iter_mut().zip(&log.steps) {
            *a += sq_err(s);
        }
    }
    let n = logs.len() as f64;
    Ok(acc.into_iter().map(|a| sqrt(a / n)).collect())
}

/// Per-timestep position RMSE over runs (x and y only).
pub fn rmse(logs: &[RunLog]) -> Result<Vec<f64>> {
    rms_over_runs(logs, |s| s.position_error_sq())
}

/// Per-timestep heading RMSE over runs, rad.
pub fn heading_rmse(logs: &[RunLog]) -> Result<Vec<f64>> {
    rms_over_runs(logs, |s| {
        let e = s.heading_error();
        e * e
    })
}

pub fn mean(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    series.iter().sum::<f64>() / series.len() as f64
}

/// Fraction of finite entries of `series` inside the closed band.
pub fn in_band_fraction(series: &[f64], band: (f64, f64)) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let inside = series
        .iter()
        .filter(|v| **v >= band.0 && **v <= band.1)
        .count();
    inside as f64 / series.len() as f64
}

/// Time-aggregated numbers for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummaryRow {
    pub run: usize,
    pub seed: u64,
    /// `sqrt(mean_t |e_pos|^2)`, m.
    pub rmse_pos: f64,
    /// `sqrt(mean_t e_phi^2)`, rad.
    pub rmse_heading: f64,
    pub mean_nees: f64,
    pub accepted: u64,
    pub gated: u64,
    pub timed_out: bool,
}

impl RunSummaryRow {
    pub fn from_log(run: usize, log: &RunLog) -> Self {
        let n = log.steps.len().max(1) as f64;
        let pos = log.steps.iter().map(|s| s.position_error_sq()).sum::<f64>() / n;
        let head = log
            .steps
            .iter()
            .map(|s| {
                let e = s.heading_error();
                e * e
            })
            .sum::<f64>()
            / n;
        Self {
            run,
            seed: log.seed,
            rmse_pos: sqrt(pos),
            rmse_heading: sqrt(head),
            mean_nees: log.steps.iter().map(|s| s.nees).sum::<f64>() / n,
            accepted: log.summary.accepted,
            gated: log.summary.gated,
            timed_out: log.summary.timed_out,
        }
    }
}

/// Ensemble consistency and accuracy report.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub t: Vec<f64>,
    pub rmse_pos: Vec<f64>,
    pub rmse_heading: Vec<f64>,
    pub avg_nees: Vec<f64>,
    pub band: (f64, f64),
    pub in_band_fraction: f64,
    pub runs: Vec<RunSummaryRow>,
}

impl EnsembleReport {
    pub fn build(logs: &[RunLog], confidence: f64) -> Result<Self> {
        let rmse_pos = rmse(logs)?;
        let rmse_heading = heading_rmse(logs)?;
        let avg_nees = average_nees(logs)?;
        let band = chi2_band(logs.len(), STATE_DIM, confidence)?;
        let in_band = in_band_fraction(&avg_nees, band);
        Ok(Self {
            t: logs[0].steps.iter().map(|s| s.t).collect(),
            rmse_pos,
            rmse_heading,
            avg_nees,
            band,
            in_band_fraction: in_band,
            runs: logs
                .iter()
                .enumerate()
                .map(|(i, l)| RunSummaryRow::from_log(i, l))
                .collect(),
        })
    }

    /// Mean over time of the per-timestep position RMSE.
    pub fn time_averaged_rmse(&self) -> f64 {
        mean(&self.rmse_pos)
    }
}
