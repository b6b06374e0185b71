//! The learner contract: train on a batch, summarize articles, and snapshot
//! or restore state so rejected perturbations can be rolled back.

mod external;
pub mod protocol;
mod surrogate;

use serde::{Deserialize, Serialize};

pub use external::{ConnectOptions, ExternalLearner};
pub use surrogate::{batch_efficacy, ScalarSurrogate, SurrogateParams, TextSurrogate, FULL_STRENGTH_BATCH};

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::types::{CheckpointToken, Hyperparams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    #[serde(default)]
    pub logprobs: bool,
}

/// An article to summarize, without its reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub article: String,
}

impl From<&Example> for Article {
    fn from(e: &Example) -> Self {
        Article {
            id: e.id.clone(),
            article: e.article.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Summary {
    pub id: String,
    pub text: String,
}

/// Per-token natural-log probabilities of one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprobs {
    pub id: String,
    pub values: Vec<f64>,
}

/// A model being adapted. One request is in flight at a time; the
/// controller is the only caller.
///
/// `restore(snapshot())` must be exact: later `summarize` calls produce the
/// same output they would have produced before the snapshot.
pub trait Learner {
    fn capabilities(&self) -> Capabilities;

    fn train(&mut self, batch: &[Example], hyperparams: &Hyperparams) -> Result<()>;

    fn summarize(&mut self, articles: &[Article]) -> Result<Vec<Summary>>;

    fn logprobs(&mut self, _items: &[Summary]) -> Result<Vec<TokenLogprobs>> {
        Err(Error::Unsupported("logprobs"))
    }

    fn snapshot(&mut self) -> Result<CheckpointToken>;

    fn restore(&mut self, token: &CheckpointToken) -> Result<()>;

    fn shutdown(&mut self) -> Result<()> {
        Ok(())
    }

    /// Skill that can be read off directly instead of measured through
    /// summaries. Only the scalar surrogate reports one.
    fn direct_score(&self) -> Option<f64> {
        None
    }
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn train(&mut self, batch: &[Example], hyperparams: &Hyperparams) -> Result<()> {
        (**self).train(batch, hyperparams)
    }
    fn summarize(&mut self, articles: &[Article]) -> Result<Vec<Summary>> {
        (**self).summarize(articles)
    }
    fn logprobs(&mut self, items: &[Summary]) -> Result<Vec<TokenLogprobs>> {
        (**self).logprobs(items)
    }
    fn snapshot(&mut self) -> Result<CheckpointToken> {
        (**self).snapshot()
    }
    fn restore(&mut self, token: &CheckpointToken) -> Result<()> {
        (**self).restore(token)
    }
    fn shutdown(&mut self) -> Result<()> {
        (**self).shutdown()
    }
    fn direct_score(&self) -> Option<f64> {
        (**self).direct_score()
    }
}
