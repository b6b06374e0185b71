//! Summarization metrics: smoothed sentence BLEU, ROUGE-1, perplexity and a
//! greedy-matching BERTScore over caller-supplied embeddings, plus the
//! corpus statistics and normalizations used for reporting.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{MeanStd, MetricsSnapshot};

/// Normalized tokens. Only [`tokenize`] constructs these, so hypotheses and
/// references always go through the same normalization.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' // curly quotes
                | '\u{2013}' | '\u{2014}' | '\u{2026}' // dashes, ellipsis
                | '\u{00AB}' | '\u{00BB}' | '\u{00A1}' | '\u{00BF}'
        )
}

/// Lowercases, splits on Unicode whitespace and strips leading and trailing
/// punctuation from each token; tokens left empty are dropped.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence(
        text.split_whitespace()
            .map(|t| t.trim_matches(is_punctuation).to_lowercase())
            .filter(|t| !t.is_empty())
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU with add-one smoothing on zero-match orders.
///
/// Modified n-gram precisions are clipped by reference counts. An order with
/// no matches contributes `1 / (total + 1)` instead of zero, so a perfect
/// match still scores exactly 1. The brevity penalty is
/// `min(1, exp(1 − |ref| / |hyp|))`.
pub fn bleu(hypothesis: &TokenSequence, reference: &TokenSequence, max_n: usize) -> f64 {
    assert!(max_n >= 1, "max_n must be at least 1");
    let hyp = hypothesis.tokens();
    let reference = reference.tokens();
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let total = hyp.len().saturating_sub(n - 1);
        let ref_counts = ngram_counts(reference, n);
        let matches: usize = ngram_counts(hyp, n)
            .into_iter()
            .map(|(gram, c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let p = if matches == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matches as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let bp = (1.0 - reference.len() as f64 / hyp.len() as f64).exp().min(1.0);
    bp * (log_sum / max_n as f64).exp()
}

/// Unigram overlap with counts clipped by the reference.
pub fn rouge1(hypothesis: &TokenSequence, reference: &TokenSequence) -> Prf {
    let ref_counts = ngram_counts(reference.tokens(), 1);
    let overlap: usize = ngram_counts(hypothesis.tokens(), 1)
        .into_iter()
        .map(|(gram, c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let ratio = |den: usize| {
        if den == 0 {
            0.0
        } else {
            overlap as f64 / den as f64
        }
    };
    Prf::new(ratio(hypothesis.len()), ratio(reference.len()))
}

/// `exp(−mean(log p))` over natural-log token probabilities.
pub fn perplexity(token_logprobs: &[f64]) -> Result<f64> {
    if token_logprobs.is_empty() {
        return Err(Error::Empty("token log-probabilities"));
    }
    if let Some(lp) = token_logprobs.iter().find(|lp| !(**lp <= 0.0)) {
        return Err(Error::Domain(format!(
            "log-probability {lp} is positive or not a number"
        )));
    }
    let mean = neumaier_sum(token_logprobs.iter().copied()) / token_logprobs.len() as f64;
    Ok((-mean).exp())
}

const UNIT_TOLERANCE: f64 = 1e-6;

fn check_embeddings(vectors: &[Vec<f64>], dim: usize, side: &str) -> Result<()> {
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::Data(format!(
                "{side} embedding {i} has dimension {}, expected {dim}",
                v.len()
            )));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Data(format!(
                "{side} embedding {i} is not unit-normalized (norm {norm})"
            )));
        }
    }
    Ok(())
}

/// Greedy cosine matching between token embeddings, without idf weighting
/// or baseline rescaling. Per-token best similarities are clamped to
/// `[0, 1]`.
pub fn bertscore(hyp_embeddings: &[Vec<f64>], ref_embeddings: &[Vec<f64>]) -> Result<Prf> {
    if hyp_embeddings.is_empty() || ref_embeddings.is_empty() {
        return Err(Error::Empty("embedding list"));
    }
    let dim = hyp_embeddings[0].len();
    check_embeddings(hyp_embeddings, dim, "hypothesis")?;
    check_embeddings(ref_embeddings, dim, "reference")?;

    let sim: Vec<Vec<f64>> = hyp_embeddings
        .iter()
        .map(|h| {
            ref_embeddings
                .iter()
                .map(|r| h.iter().zip(r).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let clamp = |x: f64| x.clamp(0.0, 1.0);
    let precision = sim
        .iter()
        .map(|row| clamp(row.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
        .sum::<f64>()
        / hyp_embeddings.len() as f64;
    let recall = (0..ref_embeddings.len())
        .map(|j| clamp(sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max)))
        .sum::<f64>()
        / ref_embeddings.len() as f64;
    Ok(Prf::new(precision, recall))
}

/// Compensated summation; keeps corpus aggregates stable regardless of the
/// order in which per-example scores were produced.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and population (divisor N) standard deviation.
pub fn corpus_stats(scores: &[f64]) -> Result<MeanStd> {
    if scores.is_empty() {
        return Err(Error::Empty("per-example scores"));
    }
    let n = scores.len() as f64;
    let mean = neumaier_sum(scores.iter().copied()) / n;
    let var = neumaier_sum(scores.iter().map(|x| (x - mean) * (x - mean))) / n;
    Ok(MeanStd {
        mean,
        std: var.sqrt(),
    })
}

/// Percentage change relative to the baseline, signed so that an
/// improvement is positive in either direction.
pub fn improvement_pct(baseline: f64, final_value: f64, lower_is_better: bool) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    let delta = if lower_is_better {
        baseline - final_value
    } else {
        final_value - baseline
    };
    Ok(100.0 * delta / baseline)
}

/// Rescales a series to `[0, 1]`. A constant series maps to zeros.
pub fn minmax_normalize(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::DegenerateSeries(format!(
            "min-max normalization needs at least 2 points, got {}",
            series.len()
        )));
    }
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    Ok(series
        .iter()
        .map(|&x| if range > 0.0 { (x - min) / range } else { 0.0 })
        .collect())
}

/// Inputs for scoring one hypothesis against its reference.
#[derive(Debug, Clone, Copy)]
pub struct ScoringInput<'a> {
    pub id: &'a str,
    pub hypothesis: &'a str,
    pub reference: &'a str,
    pub embeddings: Option<(&'a [Vec<f64>], &'a [Vec<f64>])>,
    pub logprobs: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub id: String,
    pub bleu: f64,
    pub rouge1: Prf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bertscore: Option<Prf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
}

pub fn score_example(input: &ScoringInput<'_>) -> Result<ExampleScores> {
    let wrap = |e: Error| Error::ExampleMetric {
        id: input.id.to_string(),
        source: Box::new(e),
    };
    let hyp = tokenize(input.hypothesis);
    let reference = tokenize(input.reference);
    let bertscore = input
        .embeddings
        .map(|(h, r)| bertscore(h, r))
        .transpose()
        .map_err(wrap)?;
    let perplexity = input.logprobs.map(perplexity).transpose().map_err(wrap)?;
    Ok(ExampleScores {
        id: input.id.to_string(),
        bleu: bleu(&hyp, &reference, 4),
        rouge1: rouge1(&hyp, &reference),
        bertscore,
        perplexity,
    })
}

/// Scores every pair in parallel; the result keeps input order so the
/// aggregate is identical to a sequential evaluation.
pub fn score_corpus(inputs: &[ScoringInput<'_>]) -> Result<Vec<ExampleScores>> {
    inputs.par_iter().map(score_example).collect()
}

/// Corpus summary of per-example scores. BERTScore and perplexity are
/// reported only when every example carries them.
pub fn snapshot_from_scores(scores: &[ExampleScores]) -> Result<MetricsSnapshot> {
    let column = |f: &dyn Fn(&ExampleScores) -> Option<f64>| -> Result<Option<MeanStd>> {
        let values: Option<Vec<f64>> = scores.iter().map(f).collect();
        values.map(|v| corpus_stats(&v)).transpose()
    };
    let snapshot = MetricsSnapshot {
        bleu: corpus_stats(&scores.iter().map(|s| s.bleu).collect::<Vec<_>>())?,
        rouge1_f1: corpus_stats(&scores.iter().map(|s| s.rouge1.f1).collect::<Vec<_>>())?,
        bertscore_f1: column(&|s| s.bertscore.map(|b| b.f1))?,
        perplexity: column(&|s| s.perplexity)?,
        n_examples: scores.len(),
    };
    Ok(snapshot)
}
