//! The experiment file: a [`RunConfig`] plus the learner and corpora to run
//! it on. Everything is validated before any learner is launched.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use ape_core::synth::{synthetic_corpora, SynthSpec};
use ape_core::{
    ConnectOptions, Corpus, Error, ExternalLearner, Learner, Result, RunConfig, ScalarSurrogate,
    Split, SurrogateParams, TextSurrogate,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LearnerSpec {
    ScalarSurrogate(SurrogateParams),
    TextSurrogate(SurrogateParams),
    External(ExternalSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    /// Program and arguments.
    pub launch: Vec<String>,
    #[serde(default = "default_handshake_timeout")]
    pub handshake_timeout_s: f64,
    #[serde(default)]
    pub request_timeout_s: Option<f64>,
}

fn default_handshake_timeout() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CorpusSpec {
    /// JSON-lines files; relative paths resolve against the config file.
    Files { train: PathBuf, test: PathBuf },
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub run: RunConfig,
    pub learner: LearnerSpec,
    pub corpus: CorpusSpec,
    pub verify_rollback: bool,
}

fn timeout(seconds: f64, what: &str) -> Result<Duration> {
    Duration::try_from_secs_f64(seconds)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| Error::Config(format!("{what} must be a positive number of seconds")))
}

impl CliConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut object: Map<String, Value> = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config is not a JSON object: {e}")))?;
        let mut take = |key: &str| object.remove(key);
        let learner = take("learner").ok_or_else(|| Error::Config("missing key `learner`".into()))?;
        let corpus = take("corpus").ok_or_else(|| Error::Config("missing key `corpus`".into()))?;
        let verify = take("verify_rollback");

        let field = |key: &str, e: serde_json::Error| Error::Config(format!("`{key}`: {e}"));
        let config = CliConfig {
            run: serde_json::from_value(Value::Object(object))
                .map_err(|e| Error::Config(e.to_string()))?,
            learner: serde_json::from_value(learner).map_err(|e| field("learner", e))?,
            corpus: serde_json::from_value(corpus).map_err(|e| field("corpus", e))?,
            verify_rollback: verify
                .map(serde_json::from_value)
                .transpose()
                .map_err(|e| field("verify_rollback", e))?
                .unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`; relative corpus paths become relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))?;
        if let CorpusSpec::Files { train, test } = &mut config.corpus {
            let base = path.parent().unwrap_or(Path::new(""));
            for p in [train, test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        match &self.learner {
            LearnerSpec::ScalarSurrogate(p) | LearnerSpec::TextSurrogate(p) => {
                p.tap.validate()?;
                if !(0.0..=p.tap.s_max).contains(&p.skill) {
                    return Err(Error::Config(format!(
                        "`learner.skill` {} outside [0, {}]",
                        p.skill, p.tap.s_max
                    )));
                }
                if !(p.noise_sigma.is_finite() && p.noise_sigma >= 0.0) {
                    return Err(Error::Config("`learner.noise_sigma` must be nonnegative".into()));
                }
            }
            LearnerSpec::External(ext) => {
                if ext.launch.is_empty() {
                    return Err(Error::Config("`learner.launch` is empty".into()));
                }
                timeout(ext.handshake_timeout_s, "`learner.handshake_timeout_s`")?;
                if let Some(t) = ext.request_timeout_s {
                    timeout(t, "`learner.request_timeout_s`")?;
                }
            }
        }
        if let CorpusSpec::Synthetic(s) = &self.corpus {
            if s.test == 0 {
                return Err(Error::Config("`corpus.synthetic.test` must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn load_corpora(&self) -> Result<(Corpus, Corpus)> {
        match &self.corpus {
            CorpusSpec::Files { train, test } => Ok((
                Corpus::load_jsonl(train, Split::Train)?,
                Corpus::load_jsonl(test, Split::Test)?,
            )),
            CorpusSpec::Synthetic(spec) => synthetic_corpora(spec),
        }
    }

    /// Builds (or launches) the learner. The text surrogate is given every
    /// example so it can summarize both splits.
    pub fn build_learner(&self, train: &Corpus, test: &Corpus) -> Result<Box<dyn Learner>> {
        Ok(match &self.learner {
            LearnerSpec::ScalarSurrogate(p) => Box::new(ScalarSurrogate::new(*p)?),
            LearnerSpec::TextSurrogate(p) => Box::new(TextSurrogate::new(
                *p,
                train.examples().iter().chain(test.examples()),
            )?),
            LearnerSpec::External(ext) => {
                let options = ConnectOptions {
                    handshake_timeout: timeout(ext.handshake_timeout_s, "handshake timeout")?,
                    request_timeout: ext
                        .request_timeout_s
                        .map(|t| timeout(t, "request timeout"))
                        .transpose()?,
                    record_transcript: false,
                };
                Box::new(ExternalLearner::spawn(&ext.launch, options)?)
            }
        })
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}
