//! Per-iteration perturbation batches.
//!
//! `random` draws uniformly without replacement across iterations, resetting
//! once the unused pool can no longer fill a batch. `deficiency` draws with
//! probability proportional to `1 − normalized score`, so poorly summarized
//! examples are revisited more often.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::metrics::minmax_normalize;
use crate::types::SelectionStrategy;

/// Added to every deficiency weight so no example is starved permanently.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SelectionState {
    rng: ChaCha8Rng,
    used_ids: BTreeSet<String>,
    per_example_scores: Option<HashMap<String, f64>>,
    weight_floor: f64,
}

impl SelectionState {
    pub fn new(seed: u64) -> Self {
        SelectionState {
            rng: ChaCha8Rng::seed_from_u64(seed),
            used_ids: BTreeSet::new(),
            per_example_scores: None,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }

    pub fn with_weight_floor(mut self, floor: f64) -> Self {
        self.weight_floor = floor;
        self
    }

    pub fn used_ids(&self) -> &BTreeSet<String> {
        &self.used_ids
    }

    /// Replaces the score table consulted by deficiency sampling.
    pub fn set_scores(&mut self, scores: HashMap<String, f64>) -> Result<()> {
        if let Some((id, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::Data(format!("score for `{id}` is not finite: {s}")));
        }
        self.per_example_scores = Some(scores);
        Ok(())
    }

    pub fn scores(&self) -> Option<&HashMap<String, f64>> {
        self.per_example_scores.as_ref()
    }
}

pub fn random_batch(corpus: &Corpus, delta_d: usize, state: &mut SelectionState) -> Vec<String> {
    let take = delta_d.min(corpus.len());
    let mut pool: Vec<&str> = corpus
        .ids()
        .filter(|id| !state.used_ids.contains(*id))
        .collect();
    if pool.len() < take {
        state.used_ids.clear();
        pool = corpus.ids().collect();
    }
    let batch: Vec<String> = index::sample(&mut state.rng, pool.len(), take)
        .into_iter()
        .map(|i| pool[i].to_string())
        .collect();
    state.used_ids.extend(batch.iter().cloned());
    batch
}

pub fn deficiency_batch(
    corpus: &Corpus,
    delta_d: usize,
    state: &mut SelectionState,
) -> Result<Vec<String>> {
    let take = delta_d.min(corpus.len());
    let scores = state.per_example_scores.as_ref();
    let scored: Vec<(&str, f64)> = corpus
        .ids()
        .filter_map(|id| scores.and_then(|s| s.get(id)).map(|&v| (id, v)))
        .collect();
    if scored.len() < take {
        return Err(Error::MissingScores {
            needed: take,
            available: scored.len(),
        });
    }

    let mut batch: Vec<String> = if take == scored.len() {
        scored.iter().map(|(id, _)| id.to_string()).collect()
    } else {
        let values: Vec<f64> = scored.iter().map(|(_, v)| *v).collect();
        let normalized = if values.len() >= 2 {
            minmax_normalize(&values)?
        } else {
            vec![0.0]
        };
        let mut weights: Vec<f64> = normalized
            .iter()
            .map(|n| (1.0 - n) + state.weight_floor)
            .collect();
        let mut taken = vec![false; weights.len()];
        let mut chosen = Vec::with_capacity(take);
        for _ in 0..take {
            let i = draw_weighted(&mut state.rng, &weights, &taken);
            weights[i] = 0.0;
            taken[i] = true;
            chosen.push(scored[i].0.to_string());
        }
        chosen
    };
    if take == scored.len() {
        // order is still rng-determined
        let order = index::sample(&mut state.rng, batch.len(), batch.len());
        batch = order.into_iter().map(|i| batch[i].clone()).collect();
    }
    state.used_ids.extend(batch.iter().cloned());
    Ok(batch)
}

/// Draws an index with probability proportional to `weights`; falls back to
/// a uniform draw over the entries not yet taken when every remaining weight
/// is zero.
fn draw_weighted(rng: &mut ChaCha8Rng, weights: &[f64], taken: &[bool]) -> usize {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        let mut target = rng.random::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                if target < w {
                    return i;
                }
                target -= w;
            }
        }
        // rounding residue lands on the last positive weight
        return weights.iter().rposition(|&w| w > 0.0).unwrap();
    }
    let remaining: Vec<usize> = (0..weights.len()).filter(|&i| !taken[i]).collect();
    remaining[rng.random_range(0..remaining.len())]
}

/// Stateful selector owned by one run.
#[derive(Debug, Clone)]
pub struct BatchSelector {
    strategy: SelectionStrategy,
    state: SelectionState,
}

impl BatchSelector {
    pub fn new(strategy: SelectionStrategy, state: SelectionState) -> Self {
        BatchSelector { strategy, state }
    }

    pub fn strategy(&self) -> SelectionStrategy {
        self.strategy
    }

    pub fn state(&self) -> &SelectionState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SelectionState {
        &mut self.state
    }

    pub fn next_batch(&mut self, corpus: &Corpus, delta_d: usize) -> Result<Vec<String>> {
        match self.strategy {
            SelectionStrategy::Random => Ok(random_batch(corpus, delta_d, &mut self.state)),
            SelectionStrategy::Deficiency => deficiency_batch(corpus, delta_d, &mut self.state),
        }
    }
}
