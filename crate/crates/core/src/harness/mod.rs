//! Configuration, backends, persistence, sweeps, reports and the CLI.

pub mod cli;
pub mod config;
pub mod record;
pub mod remote;
pub mod report;
pub mod sweep;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::controller::{run_dataset, BackendError, BootstrapSummary, ControlError, DatasetRun, QuestionFailure};
use crate::markov::BoundsReport;
use crate::simulation::SyntheticBackend;
use config::{BackendSection, RunConfig};
use record::{write_records, TrajectoryRecord};
use remote::RemoteBackend;

pub const TRAJECTORY_FILE: &str = "trajectories.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Invalid(#[from] crate::error::Error),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Format(String),
    #[error("{failed} of {total} questions failed; first: {first}")]
    QuestionsFailed { failed: usize, total: usize, first: String },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::Invalid(_) => 2,
            HarnessError::Control(ControlError::Invalid(_)) => 2,
            _ => 1,
        }
    }
}

pub struct RunOutput {
    pub questions: usize,
    pub run: DatasetRun,
    pub records: Vec<TrajectoryRecord>,
    pub clamp_warnings: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub questions: usize,
    pub bounds: &'a BoundsReport,
    pub bootstrap: Option<&'a BootstrapSummary>,
    pub failures: &'a [QuestionFailure],
    pub clamp_warnings: u64,
}

/// Runs the configured dataset in memory.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let prep = cfg.prepare()?;
    let (run, clamp_warnings) = match &cfg.backend {
        BackendSection::Synthetic(_) => {
            let backend = SyntheticBackend::new(cfg.run_seed, prep.synthetic.iter().cloned())?;
            let run = run_dataset(&prep.questions, &cfg.controller, &backend, &backend, &prep.priors)?;
            (run, 0)
        }
        BackendSection::Remote(settings) => {
            let backend = RemoteBackend::from_env(settings.clone())?;
            let run = run_dataset(&prep.questions, &cfg.controller, &backend, &backend, &prep.priors)?;
            (run, backend.clamp_warnings())
        }
    };
    let records = run.trajectories.iter().map(TrajectoryRecord::from).collect();
    Ok(RunOutput {
        questions: prep.questions.len(),
        run,
        records,
        clamp_warnings,
    })
}

/// Runs and persists `trajectories.jsonl` and `summary.json` under `dir`.
/// Records are written even when some questions failed; the failure is then
/// reported as an error afterwards.
pub fn execute_to_dir(cfg: &RunConfig, dir: &Path) -> Result<RunOutput, HarnessError> {
    let out = execute(cfg)?;
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_records(&dir.join(TRAJECTORY_FILE), &out.records)?;
    let summary = RunSummary {
        questions: out.questions,
        bounds: &out.run.bounds,
        bootstrap: out.run.bootstrap.as_ref(),
        failures: &out.run.failures,
        clamp_warnings: out.clamp_warnings,
    };
    let path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
    Ok(out)
}
