//! Aggregation of trajectory records into accuracy / token-proxy tables.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::record::TrajectoryRecord;
use crate::controller::{StopReason, Variant};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub variant: Variant,
    pub tau: f64,
    pub sigma: f64,
    pub questions: usize,
    /// Records whose final correctness is known.
    pub labeled: usize,
    pub correct: usize,
    /// `correct / labeled`, empty when nothing is labeled.
    pub accuracy: Option<f64>,
    pub total_token_proxy: u64,
    pub mean_token_proxy: f64,
    pub mean_iterations: f64,
    pub gated: usize,
    pub stopped: usize,
    pub exhausted: usize,
    pub failed: usize,
    pub generator_tokens: u64,
    pub verifier_tokens: u64,
}

/// One row per `(variant, tau, sigma)`, ordered by those keys.
pub fn aggregate(records: &[TrajectoryRecord]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(&'static str, u64, u64), Vec<&TrajectoryRecord>> = BTreeMap::new();
    for r in records {
        // non-negative floats order the same as their bit patterns
        groups
            .entry((r.variant.as_str(), r.tau.to_bits(), r.sigma.to_bits()))
            .or_default()
            .push(r);
    }
    groups.into_values().map(summarize).collect()
}

fn summarize(rs: Vec<&TrajectoryRecord>) -> ReportRow {
    let n = rs.len();
    let labeled = rs.iter().filter(|r| r.final_correct.is_some()).count();
    let correct = rs.iter().filter(|r| r.final_correct == Some(true)).count();
    let total_token_proxy: u64 = rs.iter().map(|r| r.token_proxy).sum();
    let iterations: usize = rs.iter().map(|r| r.iterations.len()).sum();
    let count = |reason| rs.iter().filter(|r| r.stop_reason == reason).count();
    ReportRow {
        variant: rs[0].variant,
        tau: rs[0].tau,
        sigma: rs[0].sigma,
        questions: n,
        labeled,
        correct,
        accuracy: (labeled > 0).then(|| correct as f64 / labeled as f64),
        total_token_proxy,
        mean_token_proxy: total_token_proxy as f64 / n as f64,
        mean_iterations: iterations as f64 / n as f64,
        gated: count(StopReason::Gated),
        stopped: count(StopReason::StoppingRuleMet),
        exhausted: count(StopReason::BudgetExhausted),
        failed: count(StopReason::BackendFailure),
        generator_tokens: rs.iter().filter_map(|r| r.generator_tokens).sum(),
        verifier_tokens: rs.iter().filter_map(|r| r.verifier_tokens).sum(),
    }
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
