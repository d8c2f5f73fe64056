//! The refinement control loop: gate on the prior, then iterate
//! generate -> score -> posterior update -> stopping check.

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{check_bias, check_confidence, check_probability, EstimateError, Error};
use crate::estimator::{count_transitions, estimate_transition_model, BetaPosterior, Correctness, TransitionCounts};
use crate::markov::{
    bounds_from_classified, BoundsReport, ClassifiedGroups, GroupEstimate, RegimeTally, ScalingRegime,
    TransitionModel, NEUTRAL_TOLERANCE,
};
use crate::stopping::stopping_satisfied;

/// Score at or above which an unlabeled completion counts as correct.
pub const SCORE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// One generated answer. `label` is ground truth when the backend knows it
/// (the simulator always does) and is never shown to the controller's
/// decisions, only to bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    /// 0 for the zero-shot answer, `i` for refinement round `i`.
    pub round: u32,
    pub tokens: Option<u64>,
    pub label: Option<Correctness>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub score: f64,
    pub tokens: Option<u64>,
}

impl Verdict {
    pub fn new(score: f64) -> Self {
        Self { score, tokens: None }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("request failed after {attempts} attempts: {message}")]
    Network { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("unknown question {0}")]
    UnknownQuestion(String),
    #[error("{0}")]
    Other(String),
}

/// Produces `o_i = f(q, o_{i-1})`; `previous = None` asks for the zero-shot answer.
pub trait Generator: Send + Sync {
    fn generate(&self, question: &Question, previous: Option<&Completion>) -> Result<Completion, BackendError>;
}

/// Scores a completion in `[0, 1]`.
pub trait Verifier: Send + Sync {
    fn score(&self, question: &Question, completion: &Completion) -> Result<Verdict, BackendError>;
}

/// Offline estimates for a question; either part may be missing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PriorEstimate {
    pub p0: Option<f64>,
    pub model: Option<TransitionModel>,
}

pub trait PriorProvider: Send + Sync {
    fn prior(&self, question: &Question) -> PriorEstimate;
}

/// A dataset-level transition model plus optional per-question `p0` values.
#[derive(Debug, Clone, Default)]
pub struct StaticPriors {
    pub model: Option<TransitionModel>,
    pub p0: HashMap<String, f64>,
}

impl StaticPriors {
    pub fn new(model: TransitionModel) -> Self {
        Self {
            model: Some(model),
            p0: HashMap::new(),
        }
    }

    pub fn with_p0(mut self, question_id: impl Into<String>, p0: f64) -> Self {
        self.p0.insert(question_id.into(), p0);
        self
    }
}

impl PriorProvider for StaticPriors {
    fn prior(&self, question: &Question) -> PriorEstimate {
        PriorEstimate {
            p0: self.p0.get(&question.id).copied(),
            model: self.model,
        }
    }
}

/// Overrides the transition model of another provider.
struct WithModel<'a> {
    inner: &'a dyn PriorProvider,
    model: TransitionModel,
}

impl PriorProvider for WithModel<'_> {
    fn prior(&self, question: &Question) -> PriorEstimate {
        PriorEstimate {
            model: Some(self.model),
            ..self.inner.prior(question)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Gate only; admitted questions run to the budget.
    Gate,
    /// Gate, online MAP refinement and the stopping check.
    Map,
    /// Like `Map`, with a fixed default prior and a transition model
    /// bootstrapped from the dataset itself.
    TrainingFree,
    /// No gate and no stopping check: plain refinement to the budget.
    Naive,
}

impl Variant {
    pub fn gates(self) -> bool {
        self != Variant::Naive
    }

    pub fn checks_stopping(self) -> bool {
        matches!(self, Variant::Map | Variant::TrainingFree)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Gate => "gate",
            Variant::Map => "map",
            Variant::TrainingFree => "training_free",
            Variant::Naive => "naive",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gate" => Ok(Variant::Gate),
            "map" => Ok(Variant::Map),
            "training_free" | "training-free" => Ok(Variant::TrainingFree),
            "naive" => Ok(Variant::Naive),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

/// How completions are mapped to correct/wrong states for transition counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateLabeling {
    /// Ground-truth labels, falling back to thresholded scores when absent.
    #[default]
    Labels,
    /// Verifier score >= 0.5.
    Scores,
}

/// `tau` and `sigma` are required when deserializing; the rest have defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub tau: f64,
    pub sigma: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: u32,
    #[serde(default = "defaults::variant")]
    pub variant: Variant,
    #[serde(default = "defaults::bootstrap_rounds")]
    pub bootstrap_rounds: u32,
    #[serde(default = "defaults::default_prior")]
    pub default_prior: f64,
    #[serde(default)]
    pub labeling: StateLabeling,
}

mod defaults {
    use super::Variant;

    pub fn gamma() -> f64 {
        10.0
    }
    pub fn max_iterations() -> u32 {
        64
    }
    pub fn variant() -> Variant {
        Variant::Map
    }
    pub fn bootstrap_rounds() -> u32 {
        2
    }
    pub fn default_prior() -> f64 {
        0.9
    }
}

impl ControllerConfig {
    /// Defaults for everything except `tau` and `sigma`, which have none.
    pub fn new(tau: f64, sigma: f64, variant: Variant) -> Self {
        Self {
            tau,
            sigma,
            gamma: defaults::gamma(),
            max_iterations: defaults::max_iterations(),
            variant,
            bootstrap_rounds: defaults::bootstrap_rounds(),
            default_prior: defaults::default_prior(),
            labeling: StateLabeling::Labels,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        check_confidence(self.tau)?;
        check_bias(self.sigma)?;
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidPriorStrength(self.gamma));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.bootstrap_rounds < 2 {
            return Err(Error::Config("bootstrap_rounds must be at least 2".into()));
        }
        check_probability("default_prior", self.default_prior)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub score: f64,
    pub map_estimate: f64,
    pub stopped: bool,
    pub label: Option<Correctness>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gated,
    StoppingRuleMet,
    BudgetExhausted,
    /// The generator or verifier failed; the trajectory is partial.
    BackendFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question_id: String,
    pub variant: Variant,
    pub prior_p0: f64,
    /// The prior provider had no `p0` and `default_prior` was used.
    pub prior_fallback: bool,
    pub model: TransitionModel,
    pub sigma: f64,
    pub tau: f64,
    pub regime: ScalingRegime,
    pub zero_shot_label: Option<Correctness>,
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub final_completion: Option<Completion>,
    pub generator_tokens: Option<u64>,
    pub verifier_tokens: Option<u64>,
    pub error: Option<String>,
    pub elapsed_ms: u64,
}

impl Trajectory {
    /// Ground-truth correctness of the returned completion, when known.
    pub fn final_correct(&self) -> Option<bool> {
        self.final_completion
            .as_ref()
            .and_then(|c| c.label)
            .map(Correctness::is_correct)
    }

    /// Iteration units, or generator tokens when the backend reported them.
    pub fn token_proxy(&self) -> u64 {
        self.generator_tokens.unwrap_or(self.iterations.len() as u64)
    }

    /// Observed state sequence: the zero-shot answer (when labeled) followed
    /// by every refinement round.
    pub fn states(&self, labeling: StateLabeling) -> Vec<Correctness> {
        let mut out = Vec::with_capacity(self.iterations.len() + 1);
        if labeling == StateLabeling::Labels {
            if let Some(z) = self.zero_shot_label {
                out.push(z);
            }
        }
        out.extend(
            self.iterations
                .iter()
                .map(|it| state_of(labeling, it.label, it.score)),
        );
        out
    }
}

fn state_of(labeling: StateLabeling, label: Option<Correctness>, score: f64) -> Correctness {
    match (labeling, label) {
        (StateLabeling::Labels, Some(l)) => l,
        _ => Correctness::from_score(score, SCORE_THRESHOLD),
    }
}

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("no transition model available for question {0}")]
    MissingModel(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("bootstrap estimation failed: {0}")]
    Bootstrap(EstimateError),
    #[error("backend failure on question {question_id}: {source}")]
    Backend {
        question_id: String,
        source: BackendError,
        partial: Box<Trajectory>,
    },
}

/// True when refinement should be skipped: `p_hat_0 >= L + sigma`.
pub fn gate(p_hat_0: f64, model: &TransitionModel, sigma: f64) -> bool {
    model.fixed_point() - p_hat_0 + sigma <= NEUTRAL_TOLERANCE
}

/// Runs one question through the control loop.
pub fn run_question(
    question: &Question,
    config: &ControllerConfig,
    generator: &dyn Generator,
    verifier: &dyn Verifier,
    priors: &dyn PriorProvider,
) -> Result<Trajectory, ControlError> {
    let started = Instant::now();
    config.validate()?;
    let estimate = priors.prior(question);
    let (p0, prior_fallback) = match (config.variant, estimate.p0) {
        (Variant::TrainingFree, _) | (_, None) => {
            (config.default_prior, config.variant != Variant::TrainingFree)
        }
        (_, Some(p)) => (p, false),
    };
    check_probability("prior p0", p0)?;
    let model = estimate
        .model
        .ok_or_else(|| ControlError::MissingModel(question.id.clone()))?;
    let regime = model.classify_regime(p0, config.sigma)?;

    let mut traj = Trajectory {
        question_id: question.id.clone(),
        variant: config.variant,
        prior_p0: p0,
        prior_fallback,
        model,
        sigma: config.sigma,
        tau: config.tau,
        regime,
        zero_shot_label: None,
        iterations: Vec::new(),
        stop_reason: StopReason::BudgetExhausted,
        final_completion: None,
        generator_tokens: None,
        verifier_tokens: None,
        error: None,
        elapsed_ms: 0,
    };

    let fail = |mut traj: Trajectory, source: BackendError| {
        traj.stop_reason = StopReason::BackendFailure;
        traj.error = Some(source.to_string());
        traj.elapsed_ms = started.elapsed().as_millis() as u64;
        ControlError::Backend {
            question_id: question.id.clone(),
            source,
            partial: Box::new(traj),
        }
    };

    let zero_shot = match generator.generate(question, None) {
        Ok(c) => c,
        Err(e) => return Err(fail(traj, e)),
    };
    add_tokens(&mut traj.generator_tokens, zero_shot.tokens);
    traj.zero_shot_label = zero_shot.label;

    if config.variant.gates() && gate(p0, &model, config.sigma) {
        traj.stop_reason = StopReason::Gated;
        traj.final_completion = Some(zero_shot);
        traj.elapsed_ms = started.elapsed().as_millis() as u64;
        return Ok(traj);
    }

    let mut posterior = BetaPosterior::from_prior(p0, config.gamma)?;
    let mut previous = zero_shot;
    for index in 1..=config.max_iterations {
        let completion = match generator.generate(question, Some(&previous)) {
            Ok(c) => c,
            Err(e) => {
                traj.final_completion = Some(previous);
                return Err(fail(traj, e));
            }
        };
        add_tokens(&mut traj.generator_tokens, completion.tokens);
        let verdict = match verifier.score(question, &completion) {
            Ok(v) => v,
            Err(e) => {
                traj.final_completion = Some(completion);
                return Err(fail(traj, e));
            }
        };
        add_tokens(&mut traj.verifier_tokens, verdict.tokens);
        posterior = match posterior.update(verdict.score) {
            Ok(p) => p,
            Err(e) => {
                traj.final_completion = Some(completion);
                return Err(fail(traj, BackendError::Malformed(e.to_string())));
            }
        };
        let map_estimate = posterior.map_estimate();
        let stopped =
            config.variant.checks_stopping() && stopping_satisfied(&model, map_estimate, config.tau, index);
        traj.iterations.push(IterationRecord {
            index,
            score: verdict.score,
            map_estimate,
            stopped,
            label: completion.label,
        });
        previous = completion;
        if stopped {
            traj.stop_reason = StopReason::StoppingRuleMet;
            break;
        }
    }
    traj.final_completion = Some(previous);
    traj.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok(traj)
}

fn add_tokens(total: &mut Option<u64>, extra: Option<u64>) {
    if let Some(t) = extra {
        *total = Some(total.unwrap_or(0) + t);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionFailure {
    pub question_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub rounds: u32,
    pub counts: TransitionCounts,
    pub model: TransitionModel,
}

#[derive(Debug, Clone)]
pub struct DatasetRun {
    /// Completed and partial trajectories, in dataset order.
    pub trajectories: Vec<Trajectory>,
    pub failures: Vec<QuestionFailure>,
    pub bounds: BoundsReport,
    pub bootstrap: Option<BootstrapSummary>,
}

/// Pools observed transitions per regime and derives the accuracy bounds.
pub fn bounds_from_trajectories(trajectories: &[Trajectory], labeling: StateLabeling) -> BoundsReport {
    let mut tally = RegimeTally::default();
    let mut all = TransitionCounts::default();
    let mut beneficial = TransitionCounts::default();
    let mut detrimental = TransitionCounts::default();
    for t in trajectories {
        tally.record(t.regime);
        let counts = count_transitions(&t.states(labeling));
        all += counts;
        match t.regime {
            ScalingRegime::Beneficial => beneficial += counts,
            ScalingRegime::Detrimental => detrimental += counts,
            ScalingRegime::Neutral => {}
        }
    }
    let groups = ClassifiedGroups {
        all: (!trajectories.is_empty()).then_some(GroupEstimate::Counts(all)),
        beneficial: (tally.beneficial > 0).then_some(GroupEstimate::Counts(beneficial)),
        detrimental: (tally.detrimental > 0).then_some(GroupEstimate::Counts(detrimental)),
        tally,
    };
    bounds_from_classified(&groups)
}

/// Estimates a dataset-level model from `rounds` chained generations per question.
pub fn bootstrap_transition_model(
    questions: &[Question],
    rounds: u32,
    labeling: StateLabeling,
    generator: &dyn Generator,
    verifier: &dyn Verifier,
) -> Result<BootstrapSummary, ControlError> {
    let per_question: Vec<Result<TransitionCounts, ControlError>> = questions
        .par_iter()
        .map(|q| {
            let mut states = Vec::with_capacity(rounds as usize);
            let mut previous: Option<Completion> = None;
            for _ in 0..rounds {
                let to_err = |source| ControlError::Backend {
                    question_id: q.id.clone(),
                    source,
                    partial: Box::new(placeholder_trajectory(q)),
                };
                let c = generator.generate(q, previous.as_ref()).map_err(to_err)?;
                let state = match (labeling, c.label) {
                    (StateLabeling::Labels, Some(l)) => l,
                    _ => {
                        let v = verifier.score(q, &c).map_err(|source| ControlError::Backend {
                            question_id: q.id.clone(),
                            source,
                            partial: Box::new(placeholder_trajectory(q)),
                        })?;
                        Correctness::from_score(v.score, SCORE_THRESHOLD)
                    }
                };
                states.push(state);
                previous = Some(c);
            }
            Ok(count_transitions(&states))
        })
        .collect();
    let mut counts = TransitionCounts::default();
    for c in per_question {
        counts += c?;
    }
    let model = estimate_transition_model(&counts).map_err(ControlError::Bootstrap)?;
    Ok(BootstrapSummary { rounds, counts, model })
}

fn placeholder_trajectory(q: &Question) -> Trajectory {
    Trajectory {
        question_id: q.id.clone(),
        variant: Variant::TrainingFree,
        prior_p0: 0.0,
        prior_fallback: false,
        model: TransitionModel::new(0.5, 0.5).expect("valid"),
        sigma: 0.0,
        tau: 0.5,
        regime: ScalingRegime::Neutral,
        zero_shot_label: None,
        iterations: Vec::new(),
        stop_reason: StopReason::BackendFailure,
        final_completion: None,
        generator_tokens: None,
        verifier_tokens: None,
        error: None,
        elapsed_ms: 0,
    }
}

/// Runs every question and derives the regime bounds. Per-question failures
/// are recorded and do not abort the batch.
pub fn run_dataset(
    questions: &[Question],
    config: &ControllerConfig,
    generator: &dyn Generator,
    verifier: &dyn Verifier,
    priors: &dyn PriorProvider,
) -> Result<DatasetRun, ControlError> {
    if questions.is_empty() {
        return Err(ControlError::EmptyDataset);
    }
    config.validate()?;

    let bootstrap = if config.variant == Variant::TrainingFree {
        Some(bootstrap_transition_model(
            questions,
            config.bootstrap_rounds,
            config.labeling,
            generator,
            verifier,
        )?)
    } else {
        None
    };
    let overridden;
    let priors: &dyn PriorProvider = match &bootstrap {
        Some(b) => {
            overridden = WithModel {
                inner: priors,
                model: b.model,
            };
            &overridden
        }
        None => priors,
    };

    let outcomes: Vec<Result<Trajectory, ControlError>> = questions
        .par_iter()
        .map(|q| run_question(q, config, generator, verifier, priors))
        .collect();

    let mut trajectories = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (q, outcome) in questions.iter().zip(outcomes) {
        match outcome {
            Ok(t) => trajectories.push(t),
            Err(ControlError::Backend { source, partial, .. }) => {
                failures.push(QuestionFailure {
                    question_id: q.id.clone(),
                    message: source.to_string(),
                });
                trajectories.push(*partial);
            }
            Err(e) => failures.push(QuestionFailure {
                question_id: q.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    let bounds = bounds_from_trajectories(&trajectories, config.labeling);
    Ok(DatasetRun {
        trajectories,
        failures,
        bounds,
        bootstrap,
    })
}
