//! C ABI over the seqstop analysis and estimation engine.
//!
//! Every fallible function returns a [`SeqStatus`] and writes results through
//! out-pointers. Handles are opaque and must be released with their `_free`
//! function. The message for the most recent failure on the calling thread is
//! available from [`seq_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use seqstop::{BetaPosterior, Error, ScalingRegime, TransitionCounts, TransitionModel};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidProbability = 2,
    DegenerateChain = 3,
    NoLimit = 4,
    InvalidConfidence = 5,
    InvalidBias = 6,
    InvalidPriorStrength = 7,
    ScoreOutOfRange = 8,
    EstimateFailed = 9,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqRegime {
    Beneficial = 0,
    Detrimental = 1,
    Neutral = 2,
}

/// Result of the stopping analysis. `reachable` is 0 when no iteration
/// count reaches the target, in which case `iterations` is 0.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SeqStoppingResult {
    pub reachable: u8,
    pub iterations: u32,
}

/// Opaque two-state transition model.
pub struct SeqTransitionModel(TransitionModel);

/// Opaque Beta posterior over the correctness probability.
pub struct SeqPosterior(BetaPosterior);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> SeqStatus {
    match err {
        Error::InvalidProbability { .. } => SeqStatus::InvalidProbability,
        Error::DegenerateChain => SeqStatus::DegenerateChain,
        Error::NoLimit => SeqStatus::NoLimit,
        Error::InvalidConfidence(_) => SeqStatus::InvalidConfidence,
        Error::InvalidBias(_) => SeqStatus::InvalidBias,
        Error::InvalidPriorStrength(_) => SeqStatus::InvalidPriorStrength,
        Error::ScoreOutOfRange(_) => SeqStatus::ScoreOutOfRange,
        Error::Estimate(_) | Error::Config(_) => SeqStatus::EstimateFailed,
    }
}

/// Runs `f`, converting library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), SeqStatus>) -> SeqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SeqStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside seqstop".into());
            SeqStatus::Panic
        }
    }
}

fn lib<T>(r: seqstop::Result<T>) -> Result<T, SeqStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, SeqStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null pointer argument".into());
        SeqStatus::NullPointer
    })
}

unsafe fn model<'a>(p: *const SeqTransitionModel) -> Result<&'a TransitionModel, SeqStatus> {
    p.as_ref().map(|m| &m.0).ok_or_else(|| {
        set_error("null model handle".into());
        SeqStatus::NullPointer
    })
}

/// Message for the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread. Empty if none failed.
#[no_mangle]
pub extern "C" fn seq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out_model` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn seq_model_new(a: f64, b: f64, out_model: *mut *mut SeqTransitionModel) -> SeqStatus {
    guard(|| {
        let slot = out(out_model)?;
        let m = lib(TransitionModel::new(a, b))?;
        *slot = Box::into_raw(Box::new(SeqTransitionModel(m)));
        Ok(())
    })
}

/// Fits a model from pooled transition counts.
///
/// # Safety
/// `out_model` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn seq_model_estimate(
    from_correct: u64,
    correct_to_wrong: u64,
    from_wrong: u64,
    wrong_to_correct: u64,
    out_model: *mut *mut SeqTransitionModel,
) -> SeqStatus {
    guard(|| {
        let slot = out(out_model)?;
        if correct_to_wrong > from_correct || wrong_to_correct > from_wrong {
            set_error("transition count exceeds its origin count".into());
            return Err(SeqStatus::EstimateFailed);
        }
        let counts = TransitionCounts {
            from_correct,
            correct_to_wrong,
            from_wrong,
            wrong_to_correct,
        };
        let m = lib(seqstop::estimate_transition_model(&counts).map_err(Error::from))?;
        *slot = Box::into_raw(Box::new(SeqTransitionModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from a `seq_model_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn seq_model_free(model: *mut SeqTransitionModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_model_params(
    model: *const SeqTransitionModel,
    out_a: *mut f64,
    out_b: *mut f64,
) -> SeqStatus {
    guard(|| {
        let m = self::model(model)?;
        *out(out_a)? = m.a();
        *out(out_b)? = m.b();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_model_lambda(model: *const SeqTransitionModel, out_lambda: *mut f64) -> SeqStatus {
    guard(|| {
        *out(out_lambda)? = self::model(model)?.lambda();
        Ok(())
    })
}

/// Fixed point `b / (a + b)`.
///
/// # Safety
/// Pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_model_fixed_point(model: *const SeqTransitionModel, out_limit: *mut f64) -> SeqStatus {
    guard(|| {
        *out(out_limit)? = self::model(model)?.fixed_point();
        Ok(())
    })
}

/// Probability of being correct after `i` rounds from `p0`.
///
/// # Safety
/// Pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_correct_probability_at(
    model: *const SeqTransitionModel,
    p0: f64,
    i: u32,
    out_p: *mut f64,
) -> SeqStatus {
    guard(|| {
        let m = self::model(model)?;
        let slot = out(out_p)?;
        lib(seqstop::error::check_probability("p0", p0))?;
        *slot = m.correct_probability_at(p0, i);
        Ok(())
    })
}

/// Asymptotic benefit `L - p0 + sigma`.
///
/// # Safety
/// Pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_asymptotic_benefit(
    model: *const SeqTransitionModel,
    p0: f64,
    sigma: f64,
    out_g: *mut f64,
) -> SeqStatus {
    guard(|| {
        let m = self::model(model)?;
        let slot = out(out_g)?;
        lib(seqstop::error::check_probability("p0", p0))?;
        lib(seqstop::error::check_bias(sigma))?;
        *slot = lib(m.asymptotic_benefit(p0, sigma))?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_classify_regime(
    model: *const SeqTransitionModel,
    p0: f64,
    sigma: f64,
    out_regime: *mut SeqRegime,
) -> SeqStatus {
    guard(|| {
        let m = self::model(model)?;
        let slot = out(out_regime)?;
        *slot = match lib(m.classify_regime(p0, sigma))? {
            ScalingRegime::Beneficial => SeqRegime::Beneficial,
            ScalingRegime::Detrimental => SeqRegime::Detrimental,
            ScalingRegime::Neutral => SeqRegime::Neutral,
        };
        Ok(())
    })
}

/// Gate decision: writes 1 when refinement should be skipped.
///
/// # Safety
/// Pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_gate(
    model: *const SeqTransitionModel,
    p_hat_0: f64,
    sigma: f64,
    out_skip: *mut u8,
) -> SeqStatus {
    guard(|| {
        let m = self::model(model)?;
        let slot = out(out_skip)?;
        lib(seqstop::error::check_probability("p_hat_0", p_hat_0))?;
        lib(seqstop::error::check_bias(sigma))?;
        *slot = seqstop::gate(p_hat_0, m, sigma) as u8;
        Ok(())
    })
}

/// Minimal number of rounds whose accuracy reaches `tau`.
///
/// # Safety
/// Pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_optimal_iterations(
    model: *const SeqTransitionModel,
    p0: f64,
    tau: f64,
    out_result: *mut SeqStoppingResult,
) -> SeqStatus {
    guard(|| {
        let m = self::model(model)?;
        let slot = out(out_result)?;
        let d = lib(seqstop::optimal_iterations(m, p0, tau))?;
        *slot = SeqStoppingResult {
            reachable: d.iterations.is_some() as u8,
            iterations: d.iterations.unwrap_or(0),
        };
        Ok(())
    })
}

/// Per-round stopping check against a current estimate. Writes 1 to stop.
///
/// # Safety
/// Pointers must be valid; `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_stopping_satisfied(
    model: *const SeqTransitionModel,
    p_estimate: f64,
    tau: f64,
    i: u32,
    out_stop: *mut u8,
) -> SeqStatus {
    guard(|| {
        let m = self::model(model)?;
        let slot = out(out_stop)?;
        lib(seqstop::error::check_probability("p_estimate", p_estimate))?;
        lib(seqstop::error::check_confidence(tau))?;
        *slot = seqstop::stopping_satisfied(m, p_estimate, tau, i) as u8;
        Ok(())
    })
}

/// # Safety
/// `out_posterior` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn seq_posterior_new(p_hat_0: f64, gamma: f64, out_posterior: *mut *mut SeqPosterior) -> SeqStatus {
    guard(|| {
        let slot = out(out_posterior)?;
        let p = lib(BetaPosterior::from_prior(p_hat_0, gamma))?;
        *slot = Box::into_raw(Box::new(SeqPosterior(p)));
        Ok(())
    })
}

/// Folds one verifier score in `[0, 1]` into the posterior in place. On
/// error the posterior is left unchanged.
///
/// # Safety
/// `posterior` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_posterior_update(posterior: *mut SeqPosterior, score: f64) -> SeqStatus {
    guard(|| {
        let p = out(posterior)?;
        p.0 = lib(p.0.update(score))?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `posterior` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seq_posterior_map(posterior: *const SeqPosterior, out_p: *mut f64) -> SeqStatus {
    guard(|| {
        let p = posterior.as_ref().ok_or_else(|| {
            set_error("null posterior handle".into());
            SeqStatus::NullPointer
        })?;
        *out(out_p)? = p.0.map_estimate();
        Ok(())
    })
}

/// # Safety
/// `posterior` must come from [`seq_posterior_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn seq_posterior_free(posterior: *mut SeqPosterior) {
    if !posterior.is_null() {
        drop(Box::from_raw(posterior));
    }
}
