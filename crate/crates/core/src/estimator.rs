//! Online Beta posterior over the correctness probability and empirical
//! transition counting.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, EstimateError, Error, Result};
use crate::markov::TransitionModel;

/// Beta(alpha, beta) pseudo-counts. Verifier scores enter as fractional counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    alpha: f64,
    beta: f64,
}

impl BetaPosterior {
    /// `alpha0 = p_hat0 * gamma`, `beta0 = (1 - p_hat0) * gamma`.
    pub fn from_prior(p_hat_0: f64, gamma: f64) -> Result<Self> {
        check_probability("p_hat_0", p_hat_0)?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidPriorStrength(gamma));
        }
        Ok(Self {
            alpha: p_hat_0 * gamma,
            beta: (1.0 - p_hat_0) * gamma,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Adds `score` to alpha and `1 - score` to beta.
    pub fn update(&self, score: f64) -> Result<Self> {
        if !(score.is_finite() && (0.0..=1.0).contains(&score)) {
            return Err(Error::ScoreOutOfRange(score));
        }
        Ok(Self {
            alpha: self.alpha + score,
            beta: self.beta + (1.0 - score),
        })
    }

    /// Posterior mode when both parameters exceed one, otherwise the mean.
    pub fn map_estimate(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        if a <= 1.0 || b <= 1.0 {
            a / (a + b)
        } else {
            (a - 1.0) / (a + b - 2.0)
        }
    }
}

pub fn init_prior(p_hat_0: f64, gamma: f64) -> Result<BetaPosterior> {
    BetaPosterior::from_prior(p_hat_0, gamma)
}

pub fn update_posterior(post: &BetaPosterior, score: f64) -> Result<BetaPosterior> {
    post.update(score)
}

pub fn map_estimate(post: &BetaPosterior) -> f64 {
    post.map_estimate()
}

/// Observed correctness of one answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Correctness {
    #[serde(rename = "C")]
    Correct,
    #[serde(rename = "W")]
    Wrong,
}

impl Correctness {
    pub fn is_correct(self) -> bool {
        self == Correctness::Correct
    }

    pub fn from_bool(correct: bool) -> Self {
        if correct {
            Correctness::Correct
        } else {
            Correctness::Wrong
        }
    }

    /// Label-free state: a score at or above `threshold` counts as correct.
    pub fn from_score(score: f64, threshold: f64) -> Self {
        Self::from_bool(score >= threshold)
    }

    pub fn symbol(self) -> char {
        match self {
            Correctness::Correct => 'C',
            Correctness::Wrong => 'W',
        }
    }
}

/// Adjacent-pair tallies from one or more state sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub from_correct: u64,
    pub correct_to_wrong: u64,
    pub from_wrong: u64,
    pub wrong_to_correct: u64,
}

impl TransitionCounts {
    pub fn total(&self) -> u64 {
        self.from_correct + self.from_wrong
    }

    pub fn record(&mut self, from: Correctness, to: Correctness) {
        match from {
            Correctness::Correct => {
                self.from_correct += 1;
                if to == Correctness::Wrong {
                    self.correct_to_wrong += 1;
                }
            }
            Correctness::Wrong => {
                self.from_wrong += 1;
                if to == Correctness::Correct {
                    self.wrong_to_correct += 1;
                }
            }
        }
    }
}

impl Add for TransitionCounts {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for TransitionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.from_correct += rhs.from_correct;
        self.correct_to_wrong += rhs.correct_to_wrong;
        self.from_wrong += rhs.from_wrong;
        self.wrong_to_correct += rhs.wrong_to_correct;
    }
}

impl Sum for TransitionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub fn count_transitions(states: &[Correctness]) -> TransitionCounts {
    let mut counts = TransitionCounts::default();
    for pair in states.windows(2) {
        counts.record(pair[0], pair[1]);
    }
    counts
}

/// `a = c->w / from_correct`, `b = w->c / from_wrong` on pooled counts.
pub fn estimate_transition_model(
    counts: &TransitionCounts,
) -> std::result::Result<TransitionModel, EstimateError> {
    match (counts.from_correct, counts.from_wrong) {
        (0, 0) => Err(EstimateError::Empty),
        (0, _) => Err(EstimateError::NoCorrectOrigins),
        (_, 0) => Err(EstimateError::NoWrongOrigins),
        (fc, fw) => {
            let a = counts.correct_to_wrong as f64 / fc as f64;
            let b = counts.wrong_to_correct as f64 / fw as f64;
            TransitionModel::new(a, b).map_err(|_| EstimateError::Frozen)
        }
    }
}
