//! Parallel Monte Carlo runner.

use anfekf_core::adaptation::AdaptConfig;
use anfekf_core::sim::{run_once, RunLog, Scenario, Variant};
use rayon::prelude::*;

use crate::{AppError, Result};

/// Runs `n_runs` independent simulations with seeds `base_seed + i`.
///
/// `threads = None` uses rayon's default pool size. The result is ordered by
/// run index and does not depend on the number of workers.
pub fn run_monte_carlo(
    scenario: &Scenario,
    variant: Variant,
    cfg: &AdaptConfig,
    n_runs: usize,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<Vec<RunLog>> {
    if n_runs == 0 {
        return Err(AppError::InvalidConfig("need at least one run".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let logs = pool.install(|| {
        (0..n_runs)
            .into_par_iter()
            .map(|i| run_once(scenario, variant, cfg, base_seed.wrapping_add(i as u64)))
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    Ok(logs)
}
