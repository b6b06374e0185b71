//! Iterative fine-tuning by small accepted perturbations.
//!
//! A [`controller::run`] repeatedly trains a [`Learner`] on a small batch,
//! re-measures it, and keeps the change only when the gain in the scalar
//! objective S beats the logistic growth threshold of [`tap`] (or a fixed
//! relative gain). Rejected changes are rolled back through the learner's
//! checkpoints. [`store`] persists runs and builds reports.

pub mod controller;
pub mod corpus;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod selection;
pub mod store;
pub mod synth;
pub mod tap;
pub mod types;

pub use controller::{
    accept_decision, evaluate_state, run, Decision, Evaluation, RunAborted, RunObserver,
    RunOptions, RunRecord,
};
pub use corpus::{Corpus, Example, Split};
pub use error::{Error, ErrorKind, Result};
pub use learner::{
    Article, Capabilities, ConnectOptions, ExternalLearner, Learner, ScalarSurrogate, Summary,
    SurrogateParams, TextSurrogate, TokenLogprobs,
};
pub use types::{
    aggregate_objective, AcceptanceMode, CheckpointToken, Hyperparams, IterationRecord, MeanStd,
    Metric, MetricsSnapshot, ObjectiveSpec, PerformanceState, RunConfig, SelectionStrategy,
    TapParams,
};
