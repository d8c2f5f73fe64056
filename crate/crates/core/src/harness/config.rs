//! File-backed run configuration (TOML). Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::remote::RemoteSettings;
use super::HarnessError;
use crate::controller::{ControllerConfig, Question, StaticPriors, Variant};
use crate::markov::TransitionModel;
use crate::simulation::{uniform_p0_dataset, ChainParams, SyntheticQuestionSpec, VerifierMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub controller: ControllerConfig,
    /// Dataset-level transition model handed to the controller. Required
    /// unless the variant bootstraps its own.
    #[serde(default)]
    pub model: Option<ModelSection>,
    pub backend: BackendSection,
    pub dataset: DatasetSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSection {
    Synthetic(SyntheticDefaults),
    Remote(RemoteSettings),
}

/// Chain and verifier settings applied to synthetic questions that do not
/// override them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDefaults {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub verifier_mode: VerifierMode,
    #[serde(default)]
    pub verifier_noise: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// JSONL file of [`DatasetEntry`] lines, relative to the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub questions: Vec<DatasetEntry>,
    #[serde(default)]
    pub uniform: Option<UniformDataset>,
}

/// One question. `true_p0`, `a`, `b` and the verifier fields only matter for
/// the synthetic backend; `p0` is the prior handed to the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub p0: Option<f64>,
    #[serde(default)]
    pub true_p0: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub verifier_mode: Option<VerifierMode>,
    #[serde(default)]
    pub verifier_noise: Option<f64>,
}

/// `count` synthetic questions with true `p0` drawn uniformly from `[p0_min, p0_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformDataset {
    pub count: usize,
    pub p0_min: f64,
    pub p0_max: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_prefix() -> String {
    "q".into()
}

/// Everything `run` needs, with the dataset materialized.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub questions: Vec<Question>,
    pub priors: StaticPriors,
    /// Present for the synthetic backend.
    pub synthetic: Vec<SyntheticQuestionSpec>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config; a relative dataset path is resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(p), Some(dir)) = (cfg.dataset.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.controller.validate()?;
        if let Some(m) = self.model {
            TransitionModel::new(m.a, m.b)?;
        } else if self.controller.variant != Variant::TrainingFree {
            return Err(HarnessError::Config(format!(
                "[model] with a and b is required for variant {}",
                self.controller.variant.as_str()
            )));
        }
        if let BackendSection::Synthetic(d) = &self.backend {
            ChainParams::new(d.a, d.b)?;
        }
        let sources = [
            self.dataset.path.is_some(),
            !self.dataset.questions.is_empty(),
            self.dataset.uniform.is_some(),
        ];
        if sources.iter().filter(|s| **s).count() > 1 {
            return Err(HarnessError::Config(
                "dataset: use only one of path, questions, uniform".into(),
            ));
        }
        Ok(())
    }

    fn entries(&self) -> Result<Vec<DatasetEntry>, HarnessError> {
        if let Some(path) = &self.dataset.path {
            return read_dataset(path);
        }
        if let Some(u) = &self.dataset.uniform {
            let chain = match &self.backend {
                BackendSection::Synthetic(d) => ChainParams::new(d.a, d.b)?,
                BackendSection::Remote(_) => {
                    return Err(HarnessError::Config(
                        "dataset.uniform requires the synthetic backend".into(),
                    ))
                }
            };
            return Ok(uniform_p0_dataset(&u.prefix, u.count, chain, u.p0_min, u.p0_max, u.seed)
                .into_iter()
                .map(|s| DatasetEntry {
                    id: s.question_id,
                    text: String::new(),
                    p0: None,
                    true_p0: Some(s.true_p0),
                    a: None,
                    b: None,
                    verifier_mode: None,
                    verifier_noise: None,
                })
                .collect());
        }
        Ok(self.dataset.questions.clone())
    }

    /// Materializes questions, priors and (for the synthetic backend) the
    /// hidden chain specs. With the synthetic backend, a question without an
    /// explicit `p0` uses its `true_p0` as the prior.
    pub fn prepare(&self) -> Result<Prepared, HarnessError> {
        let entries = self.entries()?;
        let mut priors = StaticPriors {
            model: self.model.map(|m| TransitionModel::new(m.a, m.b)).transpose()?,
            ..StaticPriors::default()
        };
        let mut questions = Vec::with_capacity(entries.len());
        let mut synthetic = Vec::new();
        for e in entries {
            let mut p0 = e.p0;
            if let BackendSection::Synthetic(d) = &self.backend {
                let true_p0 = e.true_p0.ok_or_else(|| {
                    HarnessError::Config(format!("question {}: synthetic backend needs true_p0", e.id))
                })?;
                let spec = SyntheticQuestionSpec {
                    question_id: e.id.clone(),
                    true_p0,
                    chain: ChainParams::new(e.a.unwrap_or(d.a), e.b.unwrap_or(d.b))?,
                    verifier_noise: e.verifier_noise.unwrap_or(d.verifier_noise),
                    verifier_mode: e.verifier_mode.unwrap_or(d.verifier_mode),
                };
                spec.validate()?;
                synthetic.push(spec);
                p0 = p0.or(Some(true_p0));
            }
            if let Some(p) = p0 {
                priors.p0.insert(e.id.clone(), p);
            }
            questions.push(Question::new(e.id, e.text));
        }
        Ok(Prepared {
            questions,
            priors,
            synthetic,
        })
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetEntry>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| HarnessError::Config(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

/// Built-in synthetic dataset used by `sweep` when no config is given:
/// 200 questions on the chain `a = 0.02, b = 0.3` (limit 0.9375) with
/// `p0` uniform in `[0.05, 0.95]`.
pub fn demo_config() -> RunConfig {
    RunConfig {
        run_seed: 1,
        output_dir: default_output_dir(),
        controller: ControllerConfig::new(0.9, 0.02, Variant::Map),
        model: Some(ModelSection { a: 0.02, b: 0.3 }),
        backend: BackendSection::Synthetic(SyntheticDefaults {
            a: 0.02,
            b: 0.3,
            verifier_mode: VerifierMode::BinaryTruth,
            verifier_noise: 0.0,
        }),
        dataset: DatasetSection {
            uniform: Some(UniformDataset {
                count: 200,
                p0_min: 0.05,
                p0_max: 0.95,
                seed: 1,
                prefix: default_prefix(),
            }),
            ..DatasetSection::default()
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
run_seed = 3
output_dir = "results"

[controller]
tau = 0.7
sigma = 0.02

[model]
a = 0.1
b = 0.3

[backend.synthetic]
a = 0.1
b = 0.3

[[dataset.questions]]
id = "q1"
true_p0 = 0.2

[[dataset.questions]]
id = "q2"
true_p0 = 0.9
p0 = 0.5
"#;

    #[test]
    fn parses_and_prepares() {
        let cfg = RunConfig::from_toml_str(BASIC).unwrap();
        assert_eq!(cfg.controller.gamma, 10.0);
        assert_eq!(cfg.controller.max_iterations, 64);
        let prep = cfg.prepare().unwrap();
        assert_eq!(prep.questions.len(), 2);
        assert_eq!(prep.priors.p0["q1"], 0.2);
        assert_eq!(prep.priors.p0["q2"], 0.5);
        assert_eq!(prep.synthetic[1].true_p0, 0.9);
    }

    #[test]
    fn missing_sigma_is_refused() {
        let text = BASIC.replace("sigma = 0.02\n", "");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("sigma"), "{err}");
    }

    #[test]
    fn unknown_keys_are_refused() {
        let text = BASIC.replace("sigma = 0.02", "sigma = 0.02\ntemperature = 1.0");
        assert!(RunConfig::from_toml_str(&text).is_err());
        let text = BASIC.replace("run_seed = 3", "run_seed = 3\nseed = 4");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn invariants_checked_at_load() {
        assert!(RunConfig::from_toml_str(&BASIC.replace("tau = 0.7", "tau = 1.5")).is_err());
        assert!(RunConfig::from_toml_str(&BASIC.replace("[model]\na = 0.1\nb = 0.3\n", "")).is_err());
        let two_backends = format!("{BASIC}\n[backend.remote]\ngenerate_url = \"http://x\"\nscore_url = \"http://y\"\n");
        assert!(RunConfig::from_toml_str(&two_backends).is_err());
    }

    #[test]
    fn demo_is_valid() {
        let cfg = demo_config();
        cfg.validate().unwrap();
        assert_eq!(cfg.prepare().unwrap().questions.len(), 200);
    }
}
