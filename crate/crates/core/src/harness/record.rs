//! Line-delimited JSON trajectory records.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::controller::{StopReason, Trajectory, Variant};
use crate::markov::ScalingRegime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationEntry {
    pub i: u32,
    pub score: f64,
    pub map_estimate: f64,
    pub stopped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub question_id: String,
    pub variant: Variant,
    pub prior_p0: f64,
    #[serde(default)]
    pub prior_fallback: bool,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub tau: f64,
    pub regime: ScalingRegime,
    pub iterations: Vec<IterationEntry>,
    pub stop_reason: StopReason,
    pub wall_ms: u64,
    pub token_proxy: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_shot_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(t: &Trajectory) -> Self {
        Self {
            question_id: t.question_id.clone(),
            variant: t.variant,
            prior_p0: t.prior_p0,
            prior_fallback: t.prior_fallback,
            a: t.model.a(),
            b: t.model.b(),
            sigma: t.sigma,
            tau: t.tau,
            regime: t.regime,
            iterations: t
                .iterations
                .iter()
                .map(|it| IterationEntry {
                    i: it.index,
                    score: it.score,
                    map_estimate: it.map_estimate,
                    stopped: it.stopped,
                    correct: it.label.map(|l| l.is_correct()),
                })
                .collect(),
            stop_reason: t.stop_reason,
            wall_ms: t.elapsed_ms,
            token_proxy: t.token_proxy(),
            zero_shot_correct: t.zero_shot_label.map(|l| l.is_correct()),
            final_correct: t.final_correct(),
            generator_tokens: t.generator_tokens,
            verifier_tokens: t.verifier_tokens,
            error: t.error.clone(),
        }
    }
}

impl TrajectoryRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// Appends one record per line; each record is written with a single call.
pub struct RecordWriter {
    out: BufWriter<File>,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    pub fn append(path: &Path) -> Result<Self, HarnessError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &TrajectoryRecord) -> std::io::Result<()> {
        let mut line = record.to_line();
        line.push('\n');
        self.out.write_all(line.as_bytes())
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

pub fn write_records(path: &Path, records: &[TrajectoryRecord]) -> Result<(), HarnessError> {
    let mut w = RecordWriter::create(path)?;
    for r in records {
        w.write(r).map_err(|e| HarnessError::io(path, e))?;
    }
    w.finish().map_err(|e| HarnessError::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<TrajectoryRecord>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = TrajectoryRecord::from_line(&line)
            .map_err(|e| HarnessError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
