//! The accept-if-improved loop.
//!
//! Evaluate a baseline, then for each iteration: snapshot the learner, pick a
//! batch, train, re-evaluate, and keep the new state only when the gain
//! clears the acceptance threshold; otherwise restore the snapshot. The
//! retained objective can therefore never decrease.

use std::collections::HashMap;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Example};
use crate::error::{Error, Result};
use crate::learner::{Article, Learner, Summary};
use crate::metrics::{score_corpus, snapshot_from_scores, ExampleScores, ScoringInput};
use crate::selection::{BatchSelector, SelectionState};
use crate::tap::threshold;
use crate::types::{
    aggregate_objective, AcceptanceMode, CheckpointToken, IterationRecord, MeanStd,
    MetricsSnapshot, PerformanceState, RunConfig, SelectionStrategy,
};

/// One evaluation of the learner on the evaluation corpus.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state: PerformanceState,
    /// Empty when the learner reports its score directly.
    pub summaries: Vec<Summary>,
    pub per_example: Vec<ExampleScores>,
}

fn collect_summaries<L: Learner + ?Sized>(
    learner: &mut L,
    corpus: &Corpus,
) -> Result<(Vec<Summary>, Option<HashMap<String, Vec<f64>>>)> {
    let articles: Vec<Article> = corpus.examples().iter().map(Article::from).collect();
    let returned = learner.summarize(&articles)?;
    let mut by_id: HashMap<String, String> =
        returned.into_iter().map(|s| (s.id, s.text)).collect();
    let summaries = corpus
        .examples()
        .iter()
        .map(|e| {
            by_id
                .remove(&e.id)
                .map(|text| Summary {
                    id: e.id.clone(),
                    text,
                })
                .ok_or_else(|| Error::MissingSummary(e.id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let logprobs = if learner.capabilities().logprobs {
        let items = learner.logprobs(&summaries)?;
        let map: HashMap<String, Vec<f64>> = items.into_iter().map(|t| (t.id, t.values)).collect();
        if let Some(missing) = summaries.iter().find(|s| !map.contains_key(&s.id)) {
            return Err(Error::Protocol(format!(
                "learner returned no log-probabilities for `{}`",
                missing.id
            )));
        }
        Some(map)
    } else {
        None
    };
    Ok((summaries, logprobs))
}

fn score_summaries(
    corpus: &Corpus,
    summaries: &[Summary],
    logprobs: Option<&HashMap<String, Vec<f64>>>,
) -> Result<Vec<ExampleScores>> {
    let inputs: Vec<ScoringInput<'_>> = corpus
        .examples()
        .iter()
        .zip(summaries)
        .map(|(e, s)| ScoringInput {
            id: &e.id,
            hypothesis: &s.text,
            reference: &e.reference,
            embeddings: None,
            logprobs: logprobs.map(|m| m[&e.id].as_slice()),
        })
        .collect();
    score_corpus(&inputs)
}

/// Measures the learner on `testset` and collapses the metrics into S.
///
/// A learner with a directly observable skill (the scalar surrogate) skips
/// summarization: S is the skill itself and the bounded metrics in the
/// snapshot carry `skill / s_max`.
pub fn evaluate_state<L: Learner + ?Sized>(
    learner: &mut L,
    testset: &Corpus,
    config: &RunConfig,
    iteration: u32,
) -> Result<Evaluation> {
    if testset.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    if let Some(skill) = learner.direct_score() {
        let normalized = MeanStd::exact((skill / config.tap.s_max).clamp(0.0, 1.0));
        return Ok(Evaluation {
            state: PerformanceState {
                iteration,
                s_value: skill,
                snapshot: MetricsSnapshot {
                    bleu: normalized,
                    rouge1_f1: normalized,
                    bertscore_f1: None,
                    perplexity: None,
                    n_examples: testset.len(),
                },
            },
            summaries: Vec::new(),
            per_example: Vec::new(),
        });
    }
    let (summaries, logprobs) = collect_summaries(learner, testset)?;
    let per_example = score_summaries(testset, &summaries, logprobs.as_ref())?;
    let snapshot = snapshot_from_scores(&per_example)?;
    snapshot.validate()?;
    let s_value = aggregate_objective(&snapshot, &config.objective)?;
    Ok(Evaluation {
        state: PerformanceState {
            iteration,
            s_value,
            snapshot,
        },
        summaries,
        per_example,
    })
}

/// Objective of each example on its own, keyed by id.
pub fn per_example_objective(
    scores: &[ExampleScores],
    config: &RunConfig,
) -> Result<HashMap<String, f64>> {
    scores
        .iter()
        .map(|s| {
            let snapshot = snapshot_from_scores(std::slice::from_ref(s))?;
            Ok((s.id.clone(), aggregate_objective(&snapshot, &config.objective)?))
        })
        .collect()
}

fn training_scores<L: Learner + ?Sized>(
    learner: &mut L,
    train: &Corpus,
    config: &RunConfig,
) -> Result<HashMap<String, f64>> {
    if let Some(skill) = learner.direct_score() {
        return Ok(train.ids().map(|id| (id.to_string(), skill)).collect());
    }
    let (summaries, logprobs) = collect_summaries(learner, train)?;
    let scores = score_summaries(train, &summaries, logprobs.as_ref())?;
    per_example_objective(&scores, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub accepted: bool,
    /// The threshold the gain was compared against.
    pub theta: f64,
}

/// Accepts a gain `delta_s` from `s_prev` iff it strictly exceeds θ.
///
/// θ is the logistic growth expected from `s_prev` (scaled by
/// `1 − margin`) or `min_rel_gain · s_prev`. The comparison is evaluated as
/// `s_prev + delta_s > s_prev + θ`, which is the same inequality but compares
/// the candidate level against the target level: a learner whose realized
/// step is exactly `s_prev + θ` is rejected regardless of how the
/// subtraction rounds.
pub fn accept_decision(delta_s: f64, s_prev: f64, config: &RunConfig) -> Result<Decision> {
    let theta = match config.acceptance {
        AcceptanceMode::LogisticThreshold { margin } => {
            threshold(s_prev, &config.tap)? * (1.0 - margin)
        }
        AcceptanceMode::FixedRelative { min_rel_gain } => min_rel_gain * s_prev,
    };
    Ok(Decision {
        accepted: s_prev + delta_s > s_prev + theta,
        theta,
    })
}

/// A finished (or aborted, when loaded from disk) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub baseline: PerformanceState,
    pub iterations: Vec<IterationRecord>,
    #[serde(rename = "final")]
    pub final_state: PerformanceState,
    pub accepted_count: u32,
}

impl RunRecord {
    /// S(t) after each iteration, starting with the baseline.
    pub fn retained_series(&self) -> Vec<f64> {
        retained(&self.baseline, &self.iterations, |s| s.s_value, |r| r.s_after_candidate)
    }

    /// Metrics of the retained state after each iteration, starting with the
    /// baseline.
    pub fn retained_snapshots(&self) -> Vec<MetricsSnapshot> {
        let mut current = self.baseline.snapshot.clone();
        let mut out = vec![current.clone()];
        for rec in &self.iterations {
            if rec.accepted {
                if let Some(c) = &rec.candidate {
                    current = c.clone();
                }
            }
            out.push(current.clone());
        }
        out
    }
}

fn retained<T: Copy>(
    baseline: &PerformanceState,
    iterations: &[IterationRecord],
    base: impl Fn(&PerformanceState) -> T,
    candidate: impl Fn(&IterationRecord) -> T,
) -> Vec<T> {
    let mut current = base(baseline);
    let mut out = vec![current];
    for rec in iterations {
        if rec.accepted {
            current = candidate(rec);
        }
        out.push(current);
    }
    out
}

/// Receives run progress as it happens. The run store implements this to
/// persist each iteration before the next one starts.
pub trait RunObserver {
    fn baseline(&mut self, _config: &RunConfig, _state: &PerformanceState) -> Result<()> {
        Ok(())
    }
    fn iteration(&mut self, _record: &IterationRecord) -> Result<()> {
        Ok(())
    }
    fn finished(&mut self, _record: &RunRecord) -> Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Re-evaluate after every rollback and fail unless the summaries are
    /// identical to those of the retained state.
    pub verify_rollback: bool,
}

#[derive(Debug, Error)]
#[error("run aborted after {} completed iterations: {source}", .partial.as_ref().map_or(0, |p| p.iterations.len()))]
pub struct RunAborted {
    /// Progress up to the failure; `None` when the baseline itself failed.
    pub partial: Option<Box<RunRecord>>,
    #[source]
    pub source: Error,
}

fn check_inputs(config: &RunConfig, train: &Corpus, test: &Corpus) -> Result<()> {
    config.validate()?;
    if test.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    if config.iterations > 0 && train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    train.ensure_disjoint(test)
}

struct Loop<'a, L: ?Sized> {
    config: &'a RunConfig,
    learner: &'a mut L,
    train: &'a Corpus,
    test: &'a Corpus,
    selector: BatchSelector,
    options: RunOptions,
    scores_stale: bool,
}

impl<L: Learner + ?Sized> Loop<'_, L> {
    fn attempt(&mut self, rec: &mut IterationRecord, current: &Evaluation) -> Result<Option<Evaluation>> {
        rec.checkpoint_ref = self.learner.snapshot()?;
        if self.selector.strategy() == SelectionStrategy::Deficiency && self.scores_stale {
            let scores = training_scores(self.learner, self.train, self.config)?;
            self.selector.state_mut().set_scores(scores)?;
            self.scores_stale = false;
        }
        rec.batch_ids = self.selector.next_batch(self.train, self.config.delta_d)?;
        let batch: Vec<Example> = rec
            .batch_ids
            .iter()
            .map(|id| self.train.get(id).expect("selector returns corpus ids").clone())
            .collect();
        self.learner.train(&batch, &self.config.hyperparams)?;

        let candidate = evaluate_state(self.learner, self.test, self.config, rec.iteration)?;
        rec.s_after_candidate = candidate.state.s_value;
        rec.delta_s = candidate.state.s_value - rec.s_before;
        rec.candidate = Some(candidate.state.snapshot.clone());
        let decision = accept_decision(rec.delta_s, rec.s_before, self.config)?;
        rec.theta = decision.theta;
        if decision.accepted {
            rec.accepted = true;
            self.scores_stale = true;
            return Ok(Some(candidate));
        }

        self.learner.restore(&rec.checkpoint_ref)?;
        if self.options.verify_rollback {
            let again = evaluate_state(self.learner, self.test, self.config, rec.iteration)?;
            if again.summaries != current.summaries
                || again.state.s_value.to_bits() != current.state.s_value.to_bits()
            {
                return Err(Error::RollbackMismatch(rec.iteration));
            }
        }
        Ok(None)
    }
}

/// Runs the full loop. Every iteration is handed to `observer` before the
/// next one begins; on failure the iteration is recorded as rejected with
/// its error and the run stops without retrying.
pub fn run<L: Learner + ?Sized>(
    config: &RunConfig,
    learner: &mut L,
    train: &Corpus,
    test: &Corpus,
    observer: &mut dyn RunObserver,
    options: RunOptions,
) -> Result<RunRecord, RunAborted> {
    let abort_early = |source| RunAborted {
        partial: None,
        source,
    };
    check_inputs(config, train, test).map_err(abort_early)?;
    let baseline = evaluate_state(learner, test, config, 0).map_err(abort_early)?;
    observer
        .baseline(config, &baseline.state)
        .map_err(abort_early)?;
    info!("baseline S = {:.6}", baseline.state.s_value);

    let mut record = RunRecord {
        config: config.clone(),
        baseline: baseline.state.clone(),
        iterations: Vec::with_capacity(config.iterations as usize),
        final_state: baseline.state.clone(),
        accepted_count: 0,
    };
    let mut current = baseline;
    let mut lp = Loop {
        config,
        learner,
        train,
        test,
        selector: BatchSelector::new(config.selection, SelectionState::new(config.seed)),
        options,
        scores_stale: true,
    };

    for t in 1..=config.iterations {
        let started = Instant::now();
        let s_before = current.state.s_value;
        let mut rec = IterationRecord {
            iteration: t,
            batch_ids: Vec::new(),
            s_before,
            s_after_candidate: s_before,
            delta_s: 0.0,
            theta: 0.0,
            accepted: false,
            checkpoint_ref: CheckpointToken(String::new()),
            wall_time_s: 0.0,
            candidate: None,
            error: None,
        };
        let outcome = lp.attempt(&mut rec, &current);
        rec.wall_time_s = started.elapsed().as_secs_f64();
        let failure = match outcome {
            Ok(Some(accepted)) => {
                current = accepted;
                record.accepted_count += 1;
                None
            }
            Ok(None) => None,
            Err(e) => {
                rec.accepted = false;
                rec.error = Some(e.to_string());
                Some(e)
            }
        };
        debug!(
            "iteration {t}: S' = {:.6}, ΔS = {:+.6}, θ = {:.6}, {}",
            rec.s_after_candidate,
            rec.delta_s,
            rec.theta,
            if rec.accepted { "accepted" } else { "rejected" }
        );
        let persisted = observer.iteration(&rec);
        record.iterations.push(rec);
        record.final_state = current.state.clone();
        if let Some(source) = failure.or(persisted.err()) {
            return Err(RunAborted {
                partial: Some(Box::new(record)),
                source,
            });
        }
    }

    info!(
        "finished: {} of {} accepted, S {:.6} -> {:.6}",
        record.accepted_count, config.iterations, record.baseline.s_value, record.final_state.s_value
    );
    if let Err(source) = observer.finished(&record) {
        return Err(RunAborted {
            partial: Some(Box::new(record)),
            source,
        });
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::learner::{ScalarSurrogate, SurrogateParams, TextSurrogate};
    use crate::types::{Hyperparams, TapParams};

    fn corpus(split: Split, prefix: &str, n: usize) -> Corpus {
        Corpus::new(
            split,
            (0..n)
                .map(|i| {
                    let words: Vec<String> =
                        (0..20).map(|j| format!("t{}", (i * 13 + j * 7) % 301)).collect();
                    Example::new(format!("{prefix}-{i}"), "body", words.join(" ")).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    fn scalar(skill: f64, k: f64, noise: f64, seed: u64) -> ScalarSurrogate {
        ScalarSurrogate::new(SurrogateParams {
            skill,
            tap: TapParams::new(k, 1.0, 1.0).unwrap(),
            noise_sigma: noise,
            seed,
        })
        .unwrap()
    }

    fn logistic_config(iterations: u32, delta_d: usize) -> RunConfig {
        RunConfig::new(iterations, delta_d)
    }

    #[test]
    fn decision_examples() {
        let cfg = logistic_config(1, 1);
        let d = accept_decision(0.03, 0.5, &cfg).unwrap();
        assert_eq!(d.theta, 0.025);
        assert!(d.accepted);

        let mut fixed = cfg.clone();
        fixed.acceptance = AcceptanceMode::FixedRelative { min_rel_gain: 0.02 };
        let d = accept_decision(0.001, 0.10, &fixed).unwrap();
        assert!((d.theta - 0.002).abs() < 1e-18);
        assert!(!d.accepted);

        assert!(!accept_decision(0.0, 0.5, &cfg).unwrap().accepted);
        assert!(!accept_decision(0.0, 0.5, &fixed).unwrap().accepted);
        // at the fixed points any gain is accepted
        assert!(accept_decision(1e-9, 0.0, &cfg).unwrap().accepted);
    }

    #[test]
    fn margin_scales_threshold() {
        let mut cfg = logistic_config(1, 1);
        cfg.acceptance = AcceptanceMode::LogisticThreshold { margin: 0.5 };
        let d = accept_decision(0.02, 0.5, &cfg).unwrap();
        assert_eq!(d.theta, 0.0125);
        assert!(d.accepted);
    }

    #[test]
    fn zero_iterations_returns_baseline() {
        let train = corpus(Split::Train, "tr", 5);
        let test = corpus(Split::Test, "te", 3);
        let mut learner = scalar(0.3, 0.1, 0.0, 0);
        let rec = run(&logistic_config(0, 2), &mut learner, &train, &test, &mut (), RunOptions::default()).unwrap();
        assert!(rec.iterations.is_empty());
        assert_eq!(rec.final_state, rec.baseline);
        assert_eq!(rec.baseline.s_value, 0.3);
    }

    #[test]
    fn scalar_path_scores_skill() {
        let test = corpus(Split::Test, "te", 3);
        let mut learner = scalar(0.37, 0.1, 0.0, 0);
        let eval = evaluate_state(&mut learner, &test, &logistic_config(1, 1), 0).unwrap();
        assert_eq!(eval.state.s_value, 0.37);
        assert!(eval.summaries.is_empty());
    }

    #[test]
    fn ceiling_text_surrogate_scores_one() {
        let test = corpus(Split::Test, "te", 10);
        let mut learner = TextSurrogate::new(
            SurrogateParams {
                skill: 1.0,
                tap: TapParams::default(),
                noise_sigma: 0.0,
                seed: 1,
            },
            test.examples(),
        )
        .unwrap();
        let eval = evaluate_state(&mut learner, &test, &logistic_config(1, 1), 0).unwrap();
        assert_eq!(eval.state.snapshot.bleu.mean, 1.0);
        assert_eq!(eval.state.s_value, 1.0);
    }

    struct Forgetful;

    impl Learner for Forgetful {
        fn capabilities(&self) -> crate::learner::Capabilities {
            Default::default()
        }
        fn train(&mut self, _: &[Example], _: &Hyperparams) -> Result<()> {
            Ok(())
        }
        fn summarize(&mut self, articles: &[Article]) -> Result<Vec<Summary>> {
            Ok(articles
                .iter()
                .skip(1)
                .map(|a| Summary {
                    id: a.id.clone(),
                    text: a.article.clone(),
                })
                .collect())
        }
        fn snapshot(&mut self) -> Result<CheckpointToken> {
            Ok(CheckpointToken("x".into()))
        }
        fn restore(&mut self, _: &CheckpointToken) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn missing_summary_names_id() {
        let test = corpus(Split::Test, "te", 3);
        let err = evaluate_state(&mut Forgetful, &test, &logistic_config(1, 1), 0).unwrap_err();
        assert!(matches!(err, Error::MissingSummary(ref id) if id == "te-0"));
    }

    #[test]
    fn strict_inequality_rejects_exact_logistic_gain() {
        let train = corpus(Split::Train, "tr", 400);
        let test = corpus(Split::Test, "te", 5);
        let mut learner = scalar(0.1, 0.1, 0.0, 0);
        let cfg = logistic_config(17, 200);
        let rec = run(&cfg, &mut learner, &train, &test, &mut (), RunOptions { verify_rollback: true }).unwrap();
        assert_eq!(rec.accepted_count, 0);
        assert_eq!(rec.final_state.s_value, rec.baseline.s_value);
        assert!(rec.iterations.iter().all(|r| !r.accepted && r.theta > 0.0));
    }

    #[test]
    fn margin_unlocks_noiseless_progress() {
        let train = corpus(Split::Train, "tr", 400);
        let test = corpus(Split::Test, "te", 5);
        let mut learner = scalar(0.1, 0.1, 0.0, 0);
        let mut cfg = logistic_config(17, 200);
        cfg.acceptance = AcceptanceMode::LogisticThreshold { margin: 0.1 };
        let rec = run(&cfg, &mut learner, &train, &test, &mut (), RunOptions::default()).unwrap();
        assert_eq!(rec.accepted_count, 17);
    }

    #[test]
    fn noisy_scalar_runs() {
        let train = corpus(Split::Train, "tr", 400);
        let test = corpus(Split::Test, "te", 5);
        let cfg = logistic_config(17, 200);
        let mut total = 0;
        for seed in 0..20 {
            let mut learner = scalar(0.1, 0.1, 0.01, seed);
            let rec = run(&cfg, &mut learner, &train, &test, &mut (), RunOptions { verify_rollback: true }).unwrap();
            assert!(rec.final_state.s_value >= rec.baseline.s_value);
            let series = rec.retained_series();
            assert!(series.windows(2).all(|w| w[1] >= w[0]));
            total += rec.accepted_count;
        }
        let mean = total as f64 / 20.0;
        assert!((3.0..=14.0).contains(&mean), "mean accepted {mean}");
    }

    #[test]
    fn run_is_deterministic() {
        let train = corpus(Split::Train, "tr", 100);
        let test = corpus(Split::Test, "te", 20);
        let all: Vec<Example> = train.examples().iter().chain(test.examples()).cloned().collect();
        let make = || {
            TextSurrogate::new(
                SurrogateParams {
                    skill: 0.2,
                    tap: TapParams::new(0.5, 1.0, 1.0).unwrap(),
                    noise_sigma: 0.02,
                    seed: 3,
                },
                &all,
            )
            .unwrap()
        };
        let mut cfg = logistic_config(8, 20);
        cfg.seed = 11;
        let strip = |mut r: RunRecord| {
            r.iterations.iter_mut().for_each(|i| i.wall_time_s = 0.0);
            r
        };
        let a = run(&cfg, &mut make(), &train, &test, &mut (), RunOptions::default()).unwrap();
        let b = run(&cfg, &mut make(), &train, &test, &mut (), RunOptions::default()).unwrap();
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn deficiency_strategy_runs() {
        let train = corpus(Split::Train, "tr", 60);
        let test = corpus(Split::Test, "te", 10);
        let all: Vec<Example> = train.examples().iter().chain(test.examples()).cloned().collect();
        let mut learner = TextSurrogate::new(
            SurrogateParams {
                skill: 0.2,
                tap: TapParams::new(0.5, 1.0, 1.0).unwrap(),
                noise_sigma: 0.02,
                seed: 3,
            },
            &all,
        )
        .unwrap();
        let mut cfg = logistic_config(5, 10);
        cfg.selection = SelectionStrategy::Deficiency;
        let rec = run(&cfg, &mut learner, &train, &test, &mut (), RunOptions { verify_rollback: true }).unwrap();
        assert_eq!(rec.iterations.len(), 5);
        assert!(rec.iterations.iter().all(|r| r.batch_ids.len() == 10));
    }

    #[test]
    fn overlapping_corpora_rejected() {
        let train = corpus(Split::Train, "x", 5);
        let test = corpus(Split::Test, "x", 2);
        let mut learner = scalar(0.3, 0.1, 0.0, 0);
        let err = run(&logistic_config(1, 2), &mut learner, &train, &test, &mut (), RunOptions::default()).unwrap_err();
        assert!(err.partial.is_none());
        assert!(matches!(err.source, Error::Data(_)));
    }

    /// Learner that dies on its n-th training call.
    struct Fragile {
        inner: ScalarSurrogate,
        trains_left: u32,
    }

    impl Learner for Fragile {
        fn capabilities(&self) -> crate::learner::Capabilities {
            Default::default()
        }
        fn train(&mut self, batch: &[Example], hp: &Hyperparams) -> Result<()> {
            if self.trains_left == 0 {
                return Err(Error::Protocol("learner closed its output".into()));
            }
            self.trains_left -= 1;
            self.inner.train(batch, hp)
        }
        fn summarize(&mut self, a: &[Article]) -> Result<Vec<Summary>> {
            self.inner.summarize(a)
        }
        fn snapshot(&mut self) -> Result<CheckpointToken> {
            self.inner.snapshot()
        }
        fn restore(&mut self, t: &CheckpointToken) -> Result<()> {
            self.inner.restore(t)
        }
        fn direct_score(&self) -> Option<f64> {
            self.inner.direct_score()
        }
    }

    #[test]
    fn failure_records_rejected_iteration_and_aborts() {
        let train = corpus(Split::Train, "tr", 50);
        let test = corpus(Split::Test, "te", 2);
        let mut learner = Fragile {
            inner: scalar(0.2, 0.3, 0.02, 1),
            trains_left: 3,
        };
        #[derive(Default)]
        struct Count(usize);
        impl RunObserver for Count {
            fn iteration(&mut self, _: &IterationRecord) -> Result<()> {
                self.0 += 1;
                Ok(())
            }
        }
        let mut seen = Count::default();
        let err = run(&logistic_config(10, 5), &mut learner, &train, &test, &mut seen, RunOptions::default()).unwrap_err();
        let partial = err.partial.unwrap();
        assert_eq!(partial.iterations.len(), 4);
        assert_eq!(seen.0, 4);
        let last = partial.iterations.last().unwrap();
        assert!(!last.accepted);
        assert!(last.error.as_deref().unwrap().contains("closed"));
        assert_eq!(err.source.kind(), crate::error::ErrorKind::Protocol);
    }
}
