//! Experiment configuration, orchestration and report files.

mod config;
mod output;
mod run;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    load_config, CheckSpec, ConfigError, ExperimentConfig, ExperimentKind, ExponentSection, GradientMomentSection,
    GridConfig, IsometrySection, MildSection, OptimalitySection, PicardSection, TimeConfig, DEFAULT_PATHS,
};
pub use output::float;
pub use run::{run, RunOutcome};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl RunError {
    fn output(path: &Path, e: impl Display) -> Self {
        RunError::Output {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}
