//! JSON-over-HTTP generator and verifier.
//!
//! Generation: `POST generate_url {question, previous?, template?}` returns
//! `{completion, tokens?, correct?}`. Scoring: `POST score_url {question,
//! completion}` returns `{score, tokens?}`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::controller::{BackendError, Completion, Generator, Question, Verdict, Verifier};
use crate::estimator::Correctness;

pub const DEFAULT_CREDENTIAL_ENV: &str = "SEQSTOP_API_KEY";
pub const DEFAULT_RETHINK_TEMPLATE: &str =
    "Re-examine your previous answer and correct it if needed.\n\nPrevious answer:\n{previous}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSettings {
    pub generate_url: String,
    pub score_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_credential_env")]
    pub credential_env: String,
    /// Sent with refinement requests; `{previous}` is replaced by the previous completion.
    #[serde(default = "default_template")]
    pub rethink_template: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_credential_env() -> String {
    DEFAULT_CREDENTIAL_ENV.into()
}
fn default_template() -> String {
    DEFAULT_RETHINK_TEMPLATE.into()
}
fn default_timeout() -> u64 {
    60
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff() -> u64 {
    250
}

impl RemoteSettings {
    pub fn new(generate_url: impl Into<String>, score_url: impl Into<String>) -> Self {
        Self {
            generate_url: generate_url.into(),
            score_url: score_url.into(),
            credential_env: default_credential_env(),
            rethink_template: default_template(),
            timeout_secs: default_timeout(),
            max_attempts: default_attempts(),
            backoff_ms: default_backoff(),
        }
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    question: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    previous: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    template: Option<String>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    completion: String,
    #[serde(default)]
    tokens: Option<u64>,
    #[serde(default)]
    correct: Option<bool>,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    question: &'a str,
    completion: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
    #[serde(default)]
    tokens: Option<u64>,
}

/// Safe to share across worker threads; requests are independent.
pub struct RemoteBackend {
    settings: RemoteSettings,
    agent: ureq::Agent,
    credential: Option<String>,
    clamped: AtomicU64,
}

impl RemoteBackend {
    /// Reads the credential from `settings.credential_env`.
    pub fn from_env(settings: RemoteSettings) -> Result<Self, BackendError> {
        let credential = std::env::var(&settings.credential_env)
            .map_err(|_| BackendError::MissingCredential(settings.credential_env.clone()))?;
        Ok(Self::with_credential(settings, Some(credential)))
    }

    pub fn with_credential(settings: RemoteSettings, credential: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build();
        Self {
            settings,
            agent,
            credential,
            clamped: AtomicU64::new(0),
        }
    }

    /// Number of scores that arrived outside `[0, 1]` and were clamped.
    pub fn clamp_warnings(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, BackendError> {
        let attempts = self.settings.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.settings.backoff_ms << (attempt - 1)));
            }
            let mut req = self.agent.post(url);
            if let Some(c) = &self.credential {
                req = req.set("Authorization", &format!("Bearer {c}"));
            }
            match req.send_json(body) {
                Ok(resp) => {
                    return resp
                        .into_json::<R>()
                        .map_err(|e| BackendError::Malformed(e.to_string()))
                }
                Err(ureq::Error::Status(status, resp)) if status == 429 || status >= 500 => {
                    last = format!("HTTP {status}: {}", resp.into_string().unwrap_or_default());
                    log::warn!("{url}: attempt {} failed: {last}", attempt + 1);
                }
                Err(ureq::Error::Status(status, resp)) => {
                    return Err(BackendError::Http {
                        status,
                        body: resp.into_string().unwrap_or_default(),
                    })
                }
                Err(ureq::Error::Transport(t)) => {
                    last = t.to_string();
                    log::warn!("{url}: attempt {} failed: {last}", attempt + 1);
                }
            }
        }
        Err(BackendError::Network {
            attempts,
            message: last,
        })
    }
}

impl Generator for RemoteBackend {
    fn generate(&self, question: &Question, previous: Option<&Completion>) -> Result<Completion, BackendError> {
        let req = GenerateRequest {
            question: &question.text,
            previous: previous.map(|p| p.text.as_str()),
            template: previous.map(|p| self.settings.rethink_template.replace("{previous}", &p.text)),
        };
        let resp: GenerateResponse = self.post(&self.settings.generate_url, &req)?;
        Ok(Completion {
            text: resp.completion,
            round: previous.map_or(0, |p| p.round + 1),
            tokens: resp.tokens,
            label: resp.correct.map(Correctness::from_bool),
        })
    }
}

impl Verifier for RemoteBackend {
    fn score(&self, question: &Question, completion: &Completion) -> Result<Verdict, BackendError> {
        let req = ScoreRequest {
            question: &question.text,
            completion: &completion.text,
        };
        let resp: ScoreResponse = self.post(&self.settings.score_url, &req)?;
        if !resp.score.is_finite() {
            return Err(BackendError::Malformed(format!("score {} is not finite", resp.score)));
        }
        let score = if (0.0..=1.0).contains(&resp.score) {
            resp.score
        } else {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            log::warn!("question {}: score {} clamped to [0, 1]", question.id, resp.score);
            resp.score.clamp(0.0, 1.0)
        };
        Ok(Verdict {
            score,
            tokens: resp.tokens,
        })
    }
}
