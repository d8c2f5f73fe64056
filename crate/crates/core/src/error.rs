use thiserror::Error;

/// Errors raised by the analytic, estimation and control layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("transition probabilities satisfy a + b = 0; the chain has no fixed point")]
    DegenerateChain,

    #[error("lambda = -1: the chain alternates forever and has no limit")]
    NoLimit,

    #[error("confidence level tau must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),

    #[error("bias sigma must be finite and non-negative, got {0}")]
    InvalidBias(f64),

    #[error("prior strength gamma must be positive, got {0}")]
    InvalidPriorStrength(f64),

    #[error("verifier score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("cannot estimate transition model: {0}")]
    Estimate(#[from] EstimateError),

    #[error("invalid controller configuration: {0}")]
    Config(String),
}

/// Why pooled transition counts could not be turned into a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EstimateError {
    #[error("no transitions observed from the correct state (a is undefined)")]
    NoCorrectOrigins,
    #[error("no transitions observed from the wrong state (b is undefined)")]
    NoWrongOrigins,
    #[error("no transitions observed at all")]
    Empty,
    #[error("estimated a + b = 0 (no state ever changed)")]
    Frozen,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

pub fn check_confidence(tau: f64) -> Result<f64> {
    if tau.is_finite() && tau > 0.0 && tau < 1.0 {
        Ok(tau)
    } else {
        Err(Error::InvalidConfidence(tau))
    }
}

pub fn check_bias(sigma: f64) -> Result<f64> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(sigma)
    } else {
        Err(Error::InvalidBias(sigma))
    }
}
