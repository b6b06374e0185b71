//! Deterministic synthetic news-like corpora for surrogate runs.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Example, Split};
use crate::error::{Error, Result};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
pub const VOCABULARY_SIZE: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub train: usize,
    pub test: usize,
    #[serde(default)]
    pub seed: u64,
}

fn syllable(i: usize) -> [u8; 2] {
    [CONSONANTS[i % CONSONANTS.len()], VOWELS[(i / CONSONANTS.len()) % VOWELS.len()]]
}

/// The `i`-th pseudo-word. Distinct for every `i < VOCABULARY_SIZE`.
pub fn pseudo_word(i: usize) -> String {
    let n = CONSONANTS.len() * VOWELS.len();
    let mut out = Vec::with_capacity(6);
    out.extend(syllable(i % n));
    out.extend(syllable(i / n % n));
    if i >= n {
        out.push(CONSONANTS[i / (n * n) % CONSONANTS.len()]);
    }
    String::from_utf8(out).expect("ascii")
}

fn sentence(rng: &mut ChaCha8Rng, len: RangeInclusive<usize>) -> Vec<String> {
    let len = rng.random_range(len);
    (0..len)
        .map(|_| pseudo_word(rng.random_range(0..VOCABULARY_SIZE)))
        .collect()
}

fn example(rng: &mut ChaCha8Rng, id: String) -> Result<Example> {
    let reference = sentence(rng, 24..=36);
    let mut article = Vec::with_capacity(140);
    // the article restates the reference among filler, in order
    for word in &reference {
        article.extend(sentence(rng, 1..=5));
        article.push(word.clone());
    }
    article.extend(sentence(rng, 5..=15));
    Example::new(id, article.join(" ") + ".", reference.join(" ") + ".")
}

fn split(rng: &mut ChaCha8Rng, split: Split, prefix: &str, n: usize) -> Result<Corpus> {
    let examples = (1..=n)
        .map(|i| example(rng, format!("{prefix}-{i:05}")))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(split, examples)
}

/// Builds disjoint train and test corpora. The same spec always produces the
/// same text.
pub fn synthetic_corpora(spec: &SynthSpec) -> Result<(Corpus, Corpus)> {
    if spec.test == 0 {
        return Err(Error::Config("synthetic test corpus must be nonempty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = split(&mut rng, Split::Train, "train", spec.train)?;
    let test = split(&mut rng, Split::Test, "test", spec.test)?;
    Ok((train, test))
}
