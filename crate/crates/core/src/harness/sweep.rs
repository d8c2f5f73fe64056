//! Grid sweeps over tau, gamma, sigma and variant on one dataset.

use serde::Serialize;

use super::config::RunConfig;
use super::report::aggregate;
use super::{execute, HarnessError};
use crate::controller::Variant;

/// Parses `lo:hi:step`, a comma list, or a single value.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad number {s:?} in {spec:?}: {e}"))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if step.is_nan() || step <= 0.0 || hi < lo {
                return Err(format!("range {spec:?} needs lo <= hi and step > 0"));
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            // snap to 12 decimals so 0.9 + 3 * 0.01 prints as 0.93
            Ok((0..=n)
                .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        [_] => spec.split(',').map(num).collect(),
        _ => Err(format!("range {spec:?} must be lo:hi:step or a comma list")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub tau: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub questions: usize,
    pub accuracy: Option<f64>,
    pub mean_iterations: f64,
    pub total_token_proxy: u64,
    pub gated: usize,
    pub stopped: usize,
    pub exhausted: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SweepGrid {
    pub variants: Vec<Variant>,
    pub taus: Vec<f64>,
    pub gammas: Vec<f64>,
    pub sigmas: Vec<f64>,
}

/// Runs `base` once per grid point. Empty axes keep the base value. Every
/// point reuses the same run seed, so the hidden chains are shared.
pub fn run_sweep(base: &RunConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>, HarnessError> {
    let c = &base.controller;
    let or = |v: &[f64], d: f64| if v.is_empty() { vec![d] } else { v.to_vec() };
    let variants = if grid.variants.is_empty() {
        vec![c.variant]
    } else {
        grid.variants.clone()
    };
    let mut rows = Vec::new();
    for &variant in &variants {
        for &tau in &or(&grid.taus, c.tau) {
            for &gamma in &or(&grid.gammas, c.gamma) {
                for &sigma in &or(&grid.sigmas, c.sigma) {
                    let mut cfg = base.clone();
                    cfg.controller.variant = variant;
                    cfg.controller.tau = tau;
                    cfg.controller.gamma = gamma;
                    cfg.controller.sigma = sigma;
                    cfg.validate()?;
                    let out = execute(&cfg)?;
                    let r = aggregate(&out.records)
                        .into_iter()
                        .next()
                        .expect("non-empty dataset gives one group");
                    rows.push(SweepRow {
                        variant,
                        tau,
                        gamma,
                        sigma,
                        questions: r.questions,
                        accuracy: r.accuracy,
                        mean_iterations: r.mean_iterations,
                        total_token_proxy: r.total_token_proxy,
                        gated: r.gated,
                        stopped: r.stopped,
                        exhausted: r.exhausted,
                        failed: r.failed,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        let v = parse_range("0.90:0.99:0.01").unwrap();
        assert_eq!(v.len(), 10);
        assert_eq!(v[3], 0.93);
        assert_eq!(v[9], 0.99);
        assert_eq!(parse_range("0.5,0.7").unwrap(), vec![0.5, 0.7]);
        assert_eq!(parse_range("2").unwrap(), vec![2.0]);
        assert!(parse_range("1:0:0.1").is_err());
        assert!(parse_range("0:1:0").is_err());
        assert!(parse_range("a:b").is_err());
    }
}
