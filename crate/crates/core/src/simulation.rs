//! Synthetic ground truth: seeded two-state chains, Monte Carlo estimates,
//! and an in-process generator/verifier pair driven by a hidden chain.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{BackendError, Completion, Generator, Question, Verdict, Verifier};
use crate::error::{check_probability, Error, Result};
use crate::estimator::Correctness;
use crate::markov::TransitionModel;
use crate::rng::{CounterRng, Purpose, StreamKey};

/// Transition probabilities without the `a + b > 0` requirement, so frozen
/// (`a = b = 0`) and alternating (`a = b = 1`) chains can be simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub a: f64,
    pub b: f64,
}

impl ChainParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        check_probability("a", a)?;
        check_probability("b", b)?;
        Ok(Self { a, b })
    }

    pub fn model(&self) -> Result<TransitionModel> {
        TransitionModel::new(self.a, self.b)
    }
}

impl From<TransitionModel> for ChainParams {
    fn from(m: TransitionModel) -> Self {
        Self { a: m.a(), b: m.b() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierMode {
    #[default]
    BinaryTruth,
    NoisyContinuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticQuestionSpec {
    pub question_id: String,
    pub true_p0: f64,
    pub chain: ChainParams,
    #[serde(default)]
    pub verifier_noise: f64,
    #[serde(default)]
    pub verifier_mode: VerifierMode,
}

impl SyntheticQuestionSpec {
    pub fn new(question_id: impl Into<String>, true_p0: f64, chain: ChainParams) -> Self {
        Self {
            question_id: question_id.into(),
            true_p0,
            chain,
            verifier_noise: 0.0,
            verifier_mode: VerifierMode::BinaryTruth,
        }
    }

    pub fn with_noise(mut self, sigma_v: f64) -> Self {
        self.verifier_mode = VerifierMode::NoisyContinuous;
        self.verifier_noise = sigma_v;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("true_p0", self.true_p0)?;
        check_probability("a", self.chain.a)?;
        check_probability("b", self.chain.b)?;
        if !(self.verifier_noise.is_finite() && self.verifier_noise >= 0.0) {
            return Err(Error::Config(format!(
                "verifier_noise must be finite and >= 0, got {}",
                self.verifier_noise
            )));
        }
        Ok(())
    }
}

/// One step of the chain; `u` is uniform in `[0, 1)`.
fn step(chain: ChainParams, state: Correctness, u: f64) -> Correctness {
    match state {
        Correctness::Correct if u < chain.a => Correctness::Wrong,
        Correctness::Wrong if u < chain.b => Correctness::Correct,
        s => s,
    }
}

fn initial(p0: f64, u: f64) -> Correctness {
    Correctness::from_bool(u < p0)
}

/// State `X_k` of the chain keyed by `key`, where draw `k` decides step `k`.
fn walk(spec: &SyntheticQuestionSpec, key: StreamKey, steps: u32, mut visit: impl FnMut(u32, Correctness)) {
    let mut state = initial(spec.true_p0, key.uniform(0));
    visit(0, state);
    for k in 1..steps {
        state = step(spec.chain, state, key.uniform(k as u64));
        visit(k, state);
    }
}

/// `steps` states starting with `X_0`.
pub fn simulate_chain(spec: &SyntheticQuestionSpec, steps: u32, seed: u64) -> Vec<Correctness> {
    let key = StreamKey::for_question(seed, &spec.question_id, Purpose::Chain);
    let mut out = Vec::with_capacity(steps as usize);
    walk(spec, key, steps, |_, s| out.push(s));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub p_hat: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl McEstimate {
    fn from_hits(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        Self {
            p_hat: p,
            std_error: (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }

    /// Distance from `value` in standard errors; an exact match with zero SE is 0.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.p_hat - value).abs();
        if d == 0.0 {
            0.0
        } else if self.std_error == 0.0 {
            f64::INFINITY
        } else {
            d / self.std_error
        }
    }
}

/// Fraction of `trials` independent chains in state C at step `i`.
pub fn monte_carlo_correct_probability(spec: &SyntheticQuestionSpec, i: u32, trials: u64, seed: u64) -> McEstimate {
    monte_carlo_profile(spec, &[i], trials, seed)[0]
}

/// Like [`monte_carlo_correct_probability`] for several steps at once, sharing
/// the simulated chains.
pub fn monte_carlo_profile(spec: &SyntheticQuestionSpec, steps: &[u32], trials: u64, seed: u64) -> Vec<McEstimate> {
    assert!(trials >= 1, "trials must be positive");
    let horizon = steps.iter().copied().max().unwrap_or(0);
    let base = StreamKey::for_question(seed, &spec.question_id, Purpose::Trial);
    let hits = (0..trials)
        .into_par_iter()
        .fold(
            || vec![0u64; horizon as usize + 1],
            |mut acc, t| {
                walk(spec, base.split(t), horizon + 1, |k, s| {
                    if s.is_correct() {
                        acc[k as usize] += 1;
                    }
                });
                acc
            },
        )
        .reduce(
            || vec![0u64; horizon as usize + 1],
            |mut x, y| {
                x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
                x
            },
        );
    steps
        .iter()
        .map(|&i| McEstimate::from_hits(hits[i as usize], trials))
        .collect()
}

/// Fraction of C states over `X_{burn_in} .. X_{steps-1}`.
pub fn ergodic_fraction(spec: &SyntheticQuestionSpec, steps: u32, burn_in: u32, seed: u64) -> f64 {
    let states = simulate_chain(spec, steps, seed);
    let tail = &states[burn_in.min(steps) as usize..];
    tail.iter().filter(|s| s.is_correct()).count() as f64 / tail.len().max(1) as f64
}

/// Generator and verifier over hidden chains, one per registered question.
///
/// The completion for round `k` is a pure function of `(run_seed, question_id, k)`
/// and the previous state, so results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    run_seed: u64,
    specs: HashMap<String, SyntheticQuestionSpec>,
}

impl SyntheticBackend {
    pub fn new(run_seed: u64, specs: impl IntoIterator<Item = SyntheticQuestionSpec>) -> Result<Self> {
        let mut map = HashMap::new();
        for s in specs {
            s.validate()?;
            if map.insert(s.question_id.clone(), s).is_some() {
                return Err(Error::Config("duplicate synthetic question id".into()));
            }
        }
        Ok(Self {
            run_seed,
            specs: map,
        })
    }

    pub fn spec(&self, question_id: &str) -> Option<&SyntheticQuestionSpec> {
        self.specs.get(question_id)
    }

    /// Hidden state carried by a completion. For test assertions only.
    pub fn hidden_state(completion: &Completion) -> Option<Correctness> {
        completion.label
    }

    /// The states the generator will emit for rounds `0..steps`, regardless of call order.
    pub fn truth(&self, question_id: &str, steps: u32) -> Option<Vec<Correctness>> {
        self.spec(question_id)
            .map(|s| simulate_chain(s, steps, self.run_seed))
    }

    fn lookup(&self, question: &Question) -> std::result::Result<&SyntheticQuestionSpec, BackendError> {
        self.specs
            .get(&question.id)
            .ok_or_else(|| BackendError::UnknownQuestion(question.id.clone()))
    }
}

impl Generator for SyntheticBackend {
    fn generate(
        &self,
        question: &Question,
        previous: Option<&Completion>,
    ) -> std::result::Result<Completion, BackendError> {
        let spec = self.lookup(question)?;
        let key = StreamKey::for_question(self.run_seed, &spec.question_id, Purpose::Chain);
        let (round, state) = match previous {
            None => (0, initial(spec.true_p0, key.uniform(0))),
            Some(prev) => {
                let from = prev.label.ok_or_else(|| {
                    BackendError::Other("previous completion has no hidden state".into())
                })?;
                let round = prev.round + 1;
                (round, step(spec.chain, from, key.uniform(round as u64)))
            }
        };
        Ok(Completion {
            text: format!("{}#{}:{}", spec.question_id, round, state.symbol()),
            round,
            tokens: None,
            label: Some(state),
        })
    }
}

impl Verifier for SyntheticBackend {
    fn score(&self, question: &Question, completion: &Completion) -> std::result::Result<Verdict, BackendError> {
        let spec = self.lookup(question)?;
        let state = completion
            .label
            .ok_or_else(|| BackendError::Other("completion has no hidden state".into()))?;
        let truth = if state.is_correct() { 1.0 } else { 0.0 };
        let score = match spec.verifier_mode {
            VerifierMode::BinaryTruth => truth,
            VerifierMode::NoisyContinuous if spec.verifier_noise == 0.0 => truth,
            VerifierMode::NoisyContinuous => {
                let key = StreamKey::for_question(self.run_seed, &spec.question_id, Purpose::VerifierNoise);
                let mut rng = CounterRng::at(key, (completion.round as u64) << 20);
                let z: f64 = rng.sample(StandardNormal);
                (truth + spec.verifier_noise * z).clamp(0.0, 1.0)
            }
        };
        Ok(Verdict::new(score))
    }
}

/// `n` questions sharing one chain, with `p0` spread uniformly over `[lo, hi]`.
pub fn uniform_p0_dataset(prefix: &str, n: usize, chain: ChainParams, lo: f64, hi: f64, seed: u64) -> Vec<SyntheticQuestionSpec> {
    let key = StreamKey::for_question(seed, prefix, Purpose::Dataset);
    (0..n)
        .map(|k| {
            let p0 = lo + (hi - lo) * key.uniform(k as u64);
            SyntheticQuestionSpec::new(format!("{prefix}-{k:04}"), p0, chain)
        })
        .collect()
}
