//! Closed forms for the two-state correctness chain.
//!
//! State `C` (correct) flips to `W` with probability `a`, and `W` flips back
//! to `C` with probability `b`. Everything here is a pure function of the
//! transition pair and the initial correctness probability `p0`:
//!
//! * `lambda = 1 - a - b` is the second eigenvalue of the transition matrix,
//! * `L = b / (a + b)` is the stationary probability of being correct,
//! * `p_i = L + lambda^i (p0 - L)` is the correctness probability after `i`
//!   refinement rounds.

use serde::{Deserialize, Serialize};

use crate::error::{check_bias, check_probability, EstimateError, Error, Result};
use crate::estimator::TransitionCounts;

/// Half-width of the band around `L + sigma` that classifies as neutral.
pub const NEUTRAL_TOLERANCE: f64 = 1e-9;

/// A validated `(a, b)` pair with `a + b > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct TransitionModel {
    a: f64,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    a: f64,
    b: f64,
}

impl TryFrom<RawModel> for TransitionModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        TransitionModel::new(raw.a, raw.b)
    }
}

impl From<TransitionModel> for RawModel {
    fn from(m: TransitionModel) -> Self {
        RawModel { a: m.a, b: m.b }
    }
}

impl TransitionModel {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        check_probability("a", a)?;
        check_probability("b", b)?;
        if a + b <= 0.0 {
            return Err(Error::DegenerateChain);
        }
        Ok(Self { a, b })
    }

    /// Probability of moving from a correct answer to a wrong one.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Probability of moving from a wrong answer to a correct one.
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn mixing(&self) -> f64 {
        self.a + self.b
    }

    /// Spectral factor `1 - a - b`, always in `[-1, 1)`.
    pub fn lambda(&self) -> f64 {
        1.0 - self.a - self.b
    }

    /// Fixed point `b / (a + b)`.
    pub fn fixed_point(&self) -> f64 {
        self.b / (self.a + self.b)
    }

    /// Alias for [`fixed_point`](Self::fixed_point): the accuracy that
    /// unbounded naive refinement converges to.
    pub fn convergence_limit(&self) -> f64 {
        self.fixed_point()
    }

    fn lambda_pow(&self, i: u32) -> f64 {
        if i == 0 {
            1.0
        } else {
            self.lambda().powi(i as i32)
        }
    }

    /// `P^i` through the eigen-decomposition, row-major with index 0 = correct.
    pub fn transition_matrix_power(&self, i: u32) -> [[f64; 2]; 2] {
        let (a, b) = (self.a, self.b);
        let s = a + b;
        let li = self.lambda_pow(i);
        [
            [(b + a * li) / s, a * (1.0 - li) / s],
            [b * (1.0 - li) / s, (a + b * li) / s],
        ]
    }

    /// Probability of being correct after `i` rounds starting from `p0`.
    pub fn correct_probability_at(&self, p0: f64, i: u32) -> f64 {
        let l = self.fixed_point();
        (l + self.lambda_pow(i) * (p0 - l)).clamp(0.0, 1.0)
    }

    pub fn distribution_at(&self, p0: f64, i: u32) -> StateDistribution {
        let p = self.correct_probability_at(p0, i);
        StateDistribution {
            p_correct: p,
            p_wrong: 1.0 - p,
        }
    }

    /// Benefit `g_i = p_i + sigma - p0 = (L - p0)(1 - lambda^i) + sigma`.
    pub fn benefit_at(&self, p0: f64, sigma: f64, i: u32) -> f64 {
        (self.fixed_point() - p0) * (1.0 - self.lambda_pow(i)) + sigma
    }

    /// Limit of [`benefit_at`](Self::benefit_at) as `i -> inf`: `L - p0 + sigma`.
    pub fn asymptotic_benefit(&self, p0: f64, sigma: f64) -> Result<f64> {
        if self.lambda() <= -1.0 {
            return Err(Error::NoLimit);
        }
        Ok(self.fixed_point() - p0 + sigma)
    }

    pub fn classify_regime(&self, p0: f64, sigma: f64) -> Result<ScalingRegime> {
        check_probability("p0", p0)?;
        check_bias(sigma)?;
        let g = self.asymptotic_benefit(p0, sigma)?;
        Ok(ScalingRegime::from_asymptotic_benefit(g))
    }
}

/// `[P(C), P(W)]` at some iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub p_correct: f64,
    pub p_wrong: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScalingRegime {
    /// `p0 < L + sigma`: refinement raises expected accuracy.
    Beneficial,
    /// `p0 > L + sigma`: refinement lowers expected accuracy.
    Detrimental,
    Neutral,
}

impl ScalingRegime {
    /// Sign of the asymptotic benefit, with a zero band of
    /// [`NEUTRAL_TOLERANCE`].
    pub fn from_asymptotic_benefit(g: f64) -> Self {
        if g.abs() <= NEUTRAL_TOLERANCE {
            ScalingRegime::Neutral
        } else if g > 0.0 {
            ScalingRegime::Beneficial
        } else {
            ScalingRegime::Detrimental
        }
    }
}

impl std::fmt::Display for ScalingRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScalingRegime::Beneficial => "Beneficial",
            ScalingRegime::Detrimental => "Detrimental",
            ScalingRegime::Neutral => "Neutral",
        };
        f.write_str(s)
    }
}

/// Input for one regime group when building a [`BoundsReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupEstimate {
    Counts(TransitionCounts),
    Model(TransitionModel),
}

impl GroupEstimate {
    fn resolve(&self) -> std::result::Result<TransitionModel, EstimateError> {
        match self {
            GroupEstimate::Model(m) => Ok(*m),
            GroupEstimate::Counts(c) => crate::estimator::estimate_transition_model(c),
        }
    }
}

/// Number of trajectories classified into each regime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeTally {
    pub beneficial: usize,
    pub detrimental: usize,
    pub neutral: usize,
}

impl RegimeTally {
    pub fn record(&mut self, regime: ScalingRegime) {
        match regime {
            ScalingRegime::Beneficial => self.beneficial += 1,
            ScalingRegime::Detrimental => self.detrimental += 1,
            ScalingRegime::Neutral => self.neutral += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.beneficial + self.detrimental + self.neutral
    }
}

/// Pooled transition evidence split by regime. `None` means the group had
/// no members.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassifiedGroups {
    pub all: Option<GroupEstimate>,
    pub beneficial: Option<GroupEstimate>,
    pub detrimental: Option<GroupEstimate>,
    pub tally: RegimeTally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Bound {
    Present { value: f64, a: f64, b: f64 },
    /// The regime group was empty.
    Absent,
    /// The group had members but its transitions cannot determine `(a, b)`.
    Unestimable { reason: String },
}

impl Bound {
    fn from_group(group: Option<&GroupEstimate>) -> Self {
        match group {
            None => Bound::Absent,
            Some(g) => match g.resolve() {
                Ok(m) => Bound::Present {
                    value: m.fixed_point(),
                    a: m.a(),
                    b: m.b(),
                },
                Err(e) => Bound::Unestimable {
                    reason: e.to_string(),
                },
            },
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Bound::Present { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn is_present(&self) -> bool {
        matches!(self, Bound::Present { .. })
    }
}

/// Neutral (all trajectories), upper (beneficial) and lower (detrimental)
/// accuracy bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub neutral: Bound,
    pub upper: Bound,
    pub lower: Bound,
    pub counts: RegimeTally,
}

impl BoundsReport {
    /// Bounds that carry a group with members but no usable transitions.
    pub fn flagged(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, b) in [
            ("neutral", &self.neutral),
            ("upper", &self.upper),
            ("lower", &self.lower),
        ] {
            if matches!(b, Bound::Unestimable { .. }) {
                out.push(name);
            }
        }
        out
    }
}

pub fn bounds_from_classified(groups: &ClassifiedGroups) -> BoundsReport {
    BoundsReport {
        neutral: Bound::from_group(groups.all.as_ref()),
        upper: Bound::from_group(groups.beneficial.as_ref()),
        lower: Bound::from_group(groups.detrimental.as_ref()),
        counts: groups.tally,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(a: f64, b: f64) -> TransitionModel {
        TransitionModel::new(a, b).unwrap()
    }

    fn mat_mul(x: [[f64; 2]; 2], y: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = x[r][0] * y[0][c] + x[r][1] * y[1][c];
            }
        }
        out
    }

    fn naive_power(a: f64, b: f64, i: u32) -> [[f64; 2]; 2] {
        let p = [[1.0 - a, a], [b, 1.0 - b]];
        let mut acc = [[1.0, 0.0], [0.0, 1.0]];
        for _ in 0..i {
            acc = mat_mul(acc, p);
        }
        acc
    }

    fn assert_mat_close(x: [[f64; 2]; 2], y: [[f64; 2]; 2], tol: f64) {
        for r in 0..2 {
            for c in 0..2 {
                assert!((x[r][c] - y[r][c]).abs() <= tol, "{x:?} vs {y:?}");
            }
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert_eq!(TransitionModel::new(0.0, 0.0), Err(Error::DegenerateChain));
        assert!(matches!(
            TransitionModel::new(1.2, 0.1),
            Err(Error::InvalidProbability { name: "a", .. })
        ));
        assert!(TransitionModel::new(f64::NAN, 0.1).is_err());
        let m = model(1.0, 1.0);
        assert_eq!(m.lambda(), -1.0);
        assert_eq!(m.asymptotic_benefit(0.5, 0.0), Err(Error::NoLimit));
        assert_eq!(m.classify_regime(0.5, 0.0), Err(Error::NoLimit));
    }

    #[test]
    fn matrix_power_examples() {
        assert_mat_close(
            model(0.2, 0.6).transition_matrix_power(0),
            [[1.0, 0.0], [0.0, 1.0]],
            1e-15,
        );
        let expected = naive_power(0.2, 0.6, 2);
        assert_mat_close(expected, [[0.76, 0.24], [0.72, 0.28]], 1e-12);
        assert_mat_close(model(0.2, 0.6).transition_matrix_power(2), expected, 1e-12);
        let expected = naive_power(0.4, 0.6, 1);
        assert_mat_close(model(0.4, 0.6).transition_matrix_power(1), expected, 1e-12);
        assert_mat_close(expected, [[0.6, 0.4], [0.6, 0.4]], 1e-12);
    }

    #[test]
    fn correct_probability_examples() {
        // one step of [0.5, 0.5] * P
        let p = naive_power(0.2, 0.6, 1);
        let oracle = 0.5 * p[0][0] + 0.5 * p[1][0];
        assert!((oracle - 0.70).abs() < 1e-12);
        assert!((model(0.2, 0.6).correct_probability_at(0.5, 1) - oracle).abs() < 1e-12);

        assert!((model(0.1, 0.3).correct_probability_at(0.75, 7) - 0.75).abs() < 1e-12);

        let p = naive_power(0.1, 0.3, 5);
        let oracle = 0.2 * p[0][0] + 0.8 * p[1][0];
        assert!((oracle - 0.70723).abs() < 1e-5);
        assert!((model(0.1, 0.3).correct_probability_at(0.2, 5) - oracle).abs() < 1e-9);

        assert_eq!(model(0.3, 0.2).correct_probability_at(0.42, 0), 0.42);
    }

    #[test]
    fn benefit_examples() {
        let m = model(0.1, 0.3);
        assert!(m.benefit_at(0.75, 0.0, 10).abs() < 1e-12);
        let expected = m.correct_probability_at(0.2, 5) - 0.2;
        assert!((m.benefit_at(0.2, 0.0, 5) - expected).abs() < 1e-12);
        assert!((expected - 0.50723).abs() < 1e-5);
        let p1 = naive_power(0.1, 0.3, 1);
        let direct = 0.9 * p1[0][0] + 0.1 * p1[1][0] + 0.02 - 0.9;
        assert!((m.benefit_at(0.9, 0.02, 1) - direct).abs() < 1e-12);
        assert!((direct + 0.04).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_benefit_and_regimes() {
        let m = model(0.1, 0.3);
        assert!((m.asymptotic_benefit(0.2, 0.0).unwrap() - 0.55).abs() < 1e-12);
        assert!(m.asymptotic_benefit(0.77, 0.02).unwrap().abs() < 1e-12);
        assert!((model(0.2, 0.6).asymptotic_benefit(0.9, 0.0).unwrap() + 0.15).abs() < 1e-12);

        assert_eq!(m.classify_regime(0.5, 0.02).unwrap(), ScalingRegime::Beneficial);
        assert_eq!(m.classify_regime(0.9, 0.02).unwrap(), ScalingRegime::Detrimental);
        assert_eq!(m.classify_regime(0.77, 0.02).unwrap(), ScalingRegime::Neutral);
        assert!(m.classify_regime(0.5, -0.1).is_err());
    }

    #[test]
    fn convergence_limit_examples() {
        assert_eq!(model(0.3, 0.3).convergence_limit(), 0.5);
        assert!((model(0.1, 0.3).convergence_limit() - 0.75).abs() < 1e-15);
        assert_eq!(model(0.0, 0.5).convergence_limit(), 1.0);
    }

    #[test]
    fn bounds_examples() {
        let groups = ClassifiedGroups {
            all: Some(GroupEstimate::Model(model(0.2, 0.6))),
            beneficial: Some(GroupEstimate::Model(model(0.1, 0.6))),
            detrimental: Some(GroupEstimate::Model(model(0.4, 0.2))),
            tally: RegimeTally::default(),
        };
        let r = bounds_from_classified(&groups);
        assert!((r.neutral.value().unwrap() - 0.75).abs() < 1e-12);
        assert!((r.upper.value().unwrap() - 0.6 / 0.7).abs() < 1e-12);
        assert!((r.lower.value().unwrap() - 0.2 / 0.6).abs() < 1e-12);

        let single = ClassifiedGroups {
            all: Some(GroupEstimate::Model(model(0.2, 0.6))),
            ..Default::default()
        };
        let r = bounds_from_classified(&single);
        assert!(r.neutral.is_present());
        assert_eq!(r.upper, Bound::Absent);
        assert_eq!(r.lower, Bound::Absent);

        let absorbing = ClassifiedGroups {
            beneficial: Some(GroupEstimate::Model(model(0.0, 0.5))),
            ..Default::default()
        };
        assert_eq!(bounds_from_classified(&absorbing).upper.value(), Some(1.0));
    }

    #[test]
    fn bounds_flag_groups_without_transitions() {
        let groups = ClassifiedGroups {
            all: Some(GroupEstimate::Counts(TransitionCounts::default())),
            beneficial: Some(GroupEstimate::Counts(TransitionCounts {
                from_correct: 10,
                correct_to_wrong: 2,
                from_wrong: 0,
                wrong_to_correct: 0,
            })),
            detrimental: None,
            tally: RegimeTally::default(),
        };
        let r = bounds_from_classified(&groups);
        assert!(matches!(r.neutral, Bound::Unestimable { .. }));
        assert!(matches!(r.upper, Bound::Unestimable { .. }));
        assert_eq!(r.lower, Bound::Absent);
        assert_eq!(r.flagged(), vec!["neutral", "upper"]);
    }

    #[test]
    fn model_serde_validates() {
        let m: TransitionModel = serde_json::from_str(r#"{"a":0.1,"b":0.3}"#).unwrap();
        assert_eq!(m, model(0.1, 0.3));
        assert!(serde_json::from_str::<TransitionModel>(r#"{"a":0.0,"b":0.0}"#).is_err());
    }
}
