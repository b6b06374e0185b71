//! Deterministic stand-ins for a fine-tuned model.
//!
//! The scalar surrogate holds a skill value that grows by the logistic
//! recursion on every `train` call. The text surrogate turns that skill into
//! summaries by corrupting the reference: each reference word survives with
//! probability `0.2 + 0.8 · skill / s_max`, otherwise it is dropped or
//! swapped for a random vocabulary word.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Article, Capabilities, Learner, Summary};
use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::tap::{logistic_step, StepNoise};
use crate::types::{CheckpointToken, Hyperparams, TapParams};

/// Batch size at which a training call has full effect.
pub const FULL_STRENGTH_BATCH: usize = 200;

const KEEP_FLOOR: f64 = 0.2;

/// Fraction of a full logistic step realized by a batch of `batch_len`
/// examples: `min(1, batch_len / 200)`.
pub fn batch_efficacy(batch_len: usize) -> f64 {
    (batch_len as f64 / FULL_STRENGTH_BATCH as f64).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateParams {
    /// Initial skill.
    pub skill: f64,
    #[serde(default)]
    pub tap: TapParams,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Checkpoints cover the skill only. The noise stream keeps advancing
/// across restores, the way a retrained model sees a fresh draw of
/// optimizer randomness instead of replaying the rejected one.
#[derive(Debug, Clone)]
pub struct ScalarSurrogate {
    skill: f64,
    noise: StepNoise,
    tap: TapParams,
    checkpoints: HashMap<String, f64>,
    next_checkpoint: u64,
}

impl ScalarSurrogate {
    pub fn new(params: SurrogateParams) -> Result<Self> {
        params.tap.validate()?;
        if !(0.0..=params.tap.s_max).contains(&params.skill) {
            return Err(Error::Config(format!(
                "surrogate skill {} outside [0, {}]",
                params.skill, params.tap.s_max
            )));
        }
        Ok(ScalarSurrogate {
            skill: params.skill,
            noise: StepNoise::new(params.noise_sigma, params.seed)
                .map_err(|e| Error::Config(e.to_string()))?,
            tap: params.tap,
            checkpoints: HashMap::new(),
            next_checkpoint: 0,
        })
    }

    pub fn skill(&self) -> f64 {
        self.skill
    }

    pub fn tap(&self) -> &TapParams {
        &self.tap
    }

    /// Advances skill as if trained on `batch_len` examples.
    pub fn step(&mut self, batch_len: usize) -> Result<f64> {
        let noise = self.noise.sample();
        self.skill = logistic_step(self.skill, &self.tap, batch_efficacy(batch_len), noise)?;
        Ok(self.skill)
    }
}

impl Learner for ScalarSurrogate {
    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }

    fn train(&mut self, batch: &[Example], _hyperparams: &Hyperparams) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Learner("training batch is empty".into()));
        }
        self.step(batch.len()).map(drop)
    }

    fn summarize(&mut self, _articles: &[Article]) -> Result<Vec<Summary>> {
        Err(Error::Unsupported("summarize"))
    }

    fn snapshot(&mut self) -> Result<CheckpointToken> {
        let token = format!("scalar-{:06}", self.next_checkpoint);
        self.next_checkpoint += 1;
        self.checkpoints.insert(token.clone(), self.skill);
        Ok(CheckpointToken(token))
    }

    fn restore(&mut self, token: &CheckpointToken) -> Result<()> {
        self.skill = *self
            .checkpoints
            .get(&token.0)
            .ok_or_else(|| Error::UnknownCheckpoint(token.0.clone()))?;
        Ok(())
    }

    fn direct_score(&self) -> Option<f64> {
        Some(self.skill)
    }
}

fn fnv1a(seed: u64, id: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    seed.to_le_bytes()
        .iter()
        .chain(id.as_bytes())
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

#[derive(Debug, Clone)]
pub struct TextSurrogate {
    scalar: ScalarSurrogate,
    references: HashMap<String, String>,
    vocabulary: Vec<String>,
    seed: u64,
}

impl TextSurrogate {
    /// `examples` must cover every article the surrogate will be asked to
    /// summarize (train and test).
    pub fn new<'a>(
        params: SurrogateParams,
        examples: impl IntoIterator<Item = &'a Example>,
    ) -> Result<Self> {
        let references: HashMap<String, String> = examples
            .into_iter()
            .map(|e| (e.id.clone(), e.reference.clone()))
            .collect();
        let vocabulary: Vec<String> = references
            .values()
            .flat_map(|r| r.split_whitespace())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(String::from)
            .collect();
        if vocabulary.is_empty() {
            return Err(Error::Config("text surrogate needs at least one reference".into()));
        }
        Ok(TextSurrogate {
            seed: params.seed,
            scalar: ScalarSurrogate::new(params)?,
            references,
            vocabulary,
        })
    }

    pub fn skill(&self) -> f64 {
        self.scalar.skill()
    }

    pub fn keep_probability(&self) -> f64 {
        KEEP_FLOOR + (1.0 - KEEP_FLOOR) * (self.scalar.skill() / self.scalar.tap().s_max)
    }

    /// Per-word draws come from a generator keyed on (seed, id) alone, so the
    /// output depends only on the current skill.
    fn corrupt(&self, id: &str, reference: &str) -> String {
        let p_keep = self.keep_probability();
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.seed, id));
        let mut words = Vec::new();
        let mut changed = false;
        for word in reference.split_whitespace() {
            let u: f64 = rng.random();
            let drop = rng.random_bool(0.5);
            let replacement = rng.random_range(0..self.vocabulary.len());
            if u < p_keep {
                words.push(word);
            } else {
                changed = true;
                if !drop {
                    words.push(&self.vocabulary[replacement]);
                }
            }
        }
        if changed {
            words.join(" ")
        } else {
            reference.to_string()
        }
    }
}

impl Learner for TextSurrogate {
    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }

    fn train(&mut self, batch: &[Example], hyperparams: &Hyperparams) -> Result<()> {
        self.scalar.train(batch, hyperparams)
    }

    fn summarize(&mut self, articles: &[Article]) -> Result<Vec<Summary>> {
        articles
            .iter()
            .map(|a| {
                let reference = self
                    .references
                    .get(&a.id)
                    .ok_or_else(|| Error::Learner(format!("unknown article id `{}`", a.id)))?;
                Ok(Summary {
                    id: a.id.clone(),
                    text: self.corrupt(&a.id, reference),
                })
            })
            .collect()
    }

    fn snapshot(&mut self) -> Result<CheckpointToken> {
        self.scalar.snapshot()
    }

    fn restore(&mut self, token: &CheckpointToken) -> Result<()> {
        self.scalar.restore(token)
    }
}
