//! Batch odometry pipeline: configuration, dataset I/O, synthetic data
//! generation, the odometry loop, trajectory files, and evaluation.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod odometry;
pub mod synth;
pub mod trajectory;

pub use config::{Config, ConfigError};
pub use dataset::{load_dataset, Dataset};
pub use eval::{ate_rmse, evaluate_relative_errors, EvalReport, EvalRow};
pub use odometry::{run_odometry, run_odometry_detailed, Keyframe, OdometryRun, RunStats};
pub use synth::{generate_synthetic, write_synthetic, SynthData};
pub use trajectory::{read_trajectory, write_trajectory, Trajectory};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gaussian(#[from] crate::gaussian::GaussianError),
    #[error("{0}")]
    Invalid(String),
}
