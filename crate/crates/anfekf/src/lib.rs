//! Scenario files, Monte Carlo driver, CSV output and the `anfekf` command
//! line on top of [`anfekf_core`].

use std::path::PathBuf;

pub mod cli;
pub mod monte_carlo;
pub mod output;
pub mod scenario_file;

pub use monte_carlo::run_monte_carlo;
pub use scenario_file::ScenarioFile;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: invalid scenario file: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Core(#[from] anfekf_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T> = std::result::Result<T, AppError>;
