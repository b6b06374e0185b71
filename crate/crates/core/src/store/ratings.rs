use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{corpus_stats, improvement_pct};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Baseline,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Informativeness,
    Fluency,
    FactualAccuracy,
    Coherence,
    Relevance,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Informativeness,
        Criterion::Fluency,
        Criterion::FactualAccuracy,
        Criterion::Coherence,
        Criterion::Relevance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Informativeness => "informativeness",
            Criterion::Fluency => "fluency",
            Criterion::FactualAccuracy => "factual_accuracy",
            Criterion::Coherence => "coherence",
            Criterion::Relevance => "relevance",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of `ratings.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub article_id: String,
    pub rater_id: String,
    pub phase: Phase,
    pub criterion: Criterion,
    pub score: u8,
}

/// Human ratings on a 1 to 5 scale, at most one per
/// (article, rater, phase, criterion).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RatingsTable {
    rows: Vec<Rating>,
}

impl RatingsTable {
    pub fn new(rows: Vec<Rating>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if !(1..=5).contains(&r.score) {
                return Err(Error::Data(format!(
                    "row {}: score {} is outside 1..=5",
                    i + 1,
                    r.score
                )));
            }
            if !seen.insert((&r.article_id, &r.rater_id, r.phase, r.criterion)) {
                return Err(Error::Data(format!(
                    "row {}: duplicate rating of `{}` by `{}` ({:?}, {})",
                    i + 1,
                    r.article_id,
                    r.rater_id,
                    r.phase,
                    r.criterion
                )));
            }
        }
        Ok(RatingsTable { rows })
    }

    /// Reads CSV with header `article_id,rater_id,phase,criterion,score`.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let rows = csv
            .deserialize()
            .enumerate()
            .map(|(i, r)| r.map_err(|e| Error::Data(format!("row {}: {e}", i + 1))))
            .collect::<Result<Vec<Rating>>>()?;
        Self::new(rows)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::from_reader(file).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn rows(&self) -> &[Rating] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSummary {
    pub criterion: Criterion,
    /// Ratings in the final phase.
    pub n: usize,
    pub baseline_mean: f64,
    pub final_mean: f64,
    /// Population standard deviation of the final ratings.
    pub final_std: f64,
    /// `final_std / sqrt(n)`.
    pub standard_error: f64,
    pub improvement_pct: f64,
}

/// Summarizes every criterion that appears in the table. A criterion rated
/// in only one phase is an error naming the empty cell.
pub fn aggregate_ratings(table: &RatingsTable) -> Result<Vec<CriterionSummary>> {
    if table.is_empty() {
        return Err(Error::Empty("ratings table"));
    }
    let mut cells: BTreeMap<(Criterion, Phase), Vec<f64>> = BTreeMap::new();
    for r in table.rows() {
        cells
            .entry((r.criterion, r.phase))
            .or_default()
            .push(f64::from(r.score));
    }
    let criteria: Vec<Criterion> = Criterion::ALL
        .into_iter()
        .filter(|c| cells.contains_key(&(*c, Phase::Baseline)) || cells.contains_key(&(*c, Phase::Final)))
        .collect();
    criteria
        .into_iter()
        .map(|c| {
            let cell = |phase: Phase| {
                cells.get(&(c, phase)).ok_or_else(|| {
                    Error::Data(format!(
                        "no {} ratings for {c}",
                        match phase {
                            Phase::Baseline => "baseline",
                            Phase::Final => "final",
                        }
                    ))
                })
            };
            let baseline = corpus_stats(cell(Phase::Baseline)?)?;
            let final_scores = cell(Phase::Final)?;
            let fin = corpus_stats(final_scores)?;
            Ok(CriterionSummary {
                criterion: c,
                n: final_scores.len(),
                baseline_mean: baseline.mean,
                final_mean: fin.mean,
                final_std: fin.std,
                standard_error: fin.std / (final_scores.len() as f64).sqrt(),
                improvement_pct: improvement_pct(baseline.mean, fin.mean, false)?,
            })
        })
        .collect()
}
