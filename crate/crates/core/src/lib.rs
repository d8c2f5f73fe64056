//! Sequential refinement control with a two-state correctness chain.
//!
//! Each refinement round either keeps a correct answer correct, breaks it, or
//! repairs a wrong one. With `a = P(C -> W)` and `b = P(W -> C)` the accuracy
//! after `i` rounds has a closed form, which gives a gate (is refinement worth
//! starting?) and a stopping rule (how many rounds reach confidence `tau`?).

pub mod controller;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod markov;
pub mod rng;
pub mod simulation;
pub mod stopping;

pub use controller::{
    gate, run_dataset, run_question, Completion, ControlError, ControllerConfig, Generator, PriorEstimate,
    PriorProvider, Question, StaticPriors, StopReason, Trajectory, Variant, Verdict, Verifier,
};
pub use error::{Error, EstimateError, Result};
pub use estimator::{
    count_transitions, estimate_transition_model, init_prior, map_estimate, update_posterior, BetaPosterior,
    Correctness, TransitionCounts,
};
pub use markov::{bounds_from_classified, Bound, BoundsReport, ScalingRegime, TransitionModel};
pub use simulation::{simulate_chain, ChainParams, SyntheticBackend, SyntheticQuestionSpec, VerifierMode};
pub use stopping::{
    brute_force_optimal_iterations, optimal_iterations, stopping_satisfied, ScanOutcome, StoppingCase,
    StoppingDecision,
};
