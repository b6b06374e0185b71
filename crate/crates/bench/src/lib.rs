//! Shared fixtures for the benchmarks.

use ape_core::synth::{synthetic_corpora, SynthSpec};
use ape_core::{Corpus, Example};

/// Synthetic corpora of the given sizes with a fixed seed.
pub fn corpora(train: usize, test: usize) -> (Corpus, Corpus) {
    synthetic_corpora(&SynthSpec {
        train,
        test,
        seed: 7,
    })
    .expect("synthetic corpora")
}

/// Every example of both corpora, for learners that need the full id space.
pub fn all_examples(train: &Corpus, test: &Corpus) -> Vec<Example> {
    train.examples().iter().chain(test.examples()).cloned().collect()
}
