use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use ape_core::controller::{run, RunOptions, RunRecord};
use ape_core::metrics::{score_corpus, snapshot_from_scores, ScoringInput};
use ape_core::store::{
    aggregate_ratings, build_report, write_report, CriterionSummary, RatingsTable, Report,
    RunStore,
};
use ape_core::{Error, Learner, MetricsSnapshot, Result};

use crate::config::CliConfig;
use crate::CliError;

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub record: RunRecord,
    pub report: Report,
}

/// Runs one experiment into `out`, then writes its report.
pub fn run_experiment(config: &CliConfig, out: &Path) -> Result<RunOutcome, CliError> {
    let (train, test) = config.load_corpora()?;
    let mut learner = config.build_learner(&train, &test)?;
    let mut store = RunStore::create(out)?;
    let options = RunOptions {
        verify_rollback: config.verify_rollback,
    };
    let result = run(&config.run, &mut learner, &train, &test, &mut store, options);
    if let Err(e) = learner.shutdown() {
        warn!("learner shutdown failed: {e}");
    }
    let record = result?;
    let report = build_report(out)?;
    write_report(out, &report)?;
    info!("run written to {}", out.display());
    Ok(RunOutcome {
        dir: out.to_path_buf(),
        record,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub delta_d: usize,
    pub iterations: u32,
    pub accepted_count: u32,
    pub baseline_s: f64,
    pub final_s: f64,
    pub baseline_bleu: f64,
    pub final_bleu: f64,
    pub improvement_pct: Option<f64>,
}

pub const ABLATION_FILE: &str = "ablation.csv";

/// One run per batch size under `out/dd_<size>`, all with the same seed and
/// corpora, plus `ablation.csv` comparing them.
pub fn ablate(config: &CliConfig, delta_ds: &[usize], out: &Path) -> Result<Vec<AblationRow>, CliError> {
    if delta_ds.is_empty() {
        return Err(Error::Config("no batch sizes given".into()).into());
    }
    let mut seen = HashSet::new();
    if let Some(dup) = delta_ds.iter().find(|d| !seen.insert(**d)) {
        return Err(Error::Config(format!("batch size {dup} listed twice")).into());
    }
    let mut rows = Vec::with_capacity(delta_ds.len());
    for &delta_d in delta_ds {
        let mut arm = config.clone();
        arm.run.delta_d = delta_d;
        arm.validate()?;
        let outcome = run_experiment(&arm, &out.join(format!("dd_{delta_d}")))?;
        let bleu = outcome.report.metrics.iter().find(|m| m.metric == ape_core::Metric::Bleu);
        rows.push(AblationRow {
            delta_d,
            iterations: arm.run.iterations,
            accepted_count: outcome.record.accepted_count,
            baseline_s: outcome.record.baseline.s_value,
            final_s: outcome.record.final_state.s_value,
            baseline_bleu: outcome.record.baseline.snapshot.bleu.mean,
            final_bleu: outcome.record.final_state.snapshot.bleu.mean,
            improvement_pct: bleu.and_then(|m| m.improvement_pct),
        });
    }
    let mut w = csv::Writer::from_path(out.join(ABLATION_FILE)).map_err(Error::from)?;
    for row in &rows {
        w.serialize(row).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(rows)
}

#[derive(Debug, Deserialize)]
struct TextLine {
    id: String,
    #[serde(alias = "reference", alias = "summary")]
    text: String,
}

#[derive(Debug, Deserialize)]
struct EmbeddingLine {
    id: String,
    vectors: Vec<Vec<f64>>,
}

fn read_jsonl<T>(path: &Path) -> Result<Vec<(String, T)>>
where
    T: serde::de::DeserializeOwned + HasId,
{
    let file = File::open(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        let id = item.id().to_string();
        if !ids.insert(id.clone()) {
            return Err(Error::Data(format!("{}: duplicate id `{id}`", path.display())));
        }
        out.push((id, item));
    }
    Ok(out)
}

trait HasId {
    fn id(&self) -> &str;
}

impl HasId for TextLine {
    fn id(&self) -> &str {
        &self.id
    }
}

impl HasId for EmbeddingLine {
    fn id(&self) -> &str {
        &self.id
    }
}

fn missing_list(label: &str, ids: &[&str]) -> Option<String> {
    if ids.is_empty() {
        return None;
    }
    const SHOWN: usize = 20;
    let mut s = format!("{label} missing for {} ids: {}", ids.len(), ids[..ids.len().min(SHOWN)].join(", "));
    if ids.len() > SHOWN {
        s.push_str(", ...");
    }
    Some(s)
}

/// Fails unless both id lists hold the same ids, naming what each side
/// lacks.
fn check_alignment(left_label: &str, left: &[&str], right_label: &str, right: &[&str]) -> Result<()> {
    let l: HashSet<&str> = left.iter().copied().collect();
    let r: HashSet<&str> = right.iter().copied().collect();
    let lacking_right: Vec<&str> = left.iter().copied().filter(|id| !r.contains(id)).collect();
    let lacking_left: Vec<&str> = right.iter().copied().filter(|id| !l.contains(id)).collect();
    let parts: Vec<String> = [
        missing_list(left_label, &lacking_left),
        missing_list(right_label, &lacking_right),
    ]
    .into_iter()
    .flatten()
    .collect();
    if parts.is_empty() {
        Ok(())
    } else {
        Err(Error::Data(format!("id mismatch: {}", parts.join("; "))))
    }
}

fn ids<T>(lines: &[(String, T)]) -> Vec<&str> {
    lines.iter().map(|(id, _)| id.as_str()).collect()
}

/// Embedding files for `eval`: hypothesis then reference token vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingFiles {
    pub hypotheses: PathBuf,
    pub references: PathBuf,
}

/// Scores a hypothesis file against a reference file. Both are JSON lines
/// with `id` and `text` (`reference` is accepted for the latter, so a corpus
/// file works directly). Embedding files carry `id` and `vectors`.
pub fn eval(hyps: &Path, refs: &Path, embeddings: Option<&EmbeddingFiles>) -> Result<MetricsSnapshot> {
    let hyp_lines = read_jsonl::<TextLine>(hyps)?;
    let ref_lines = read_jsonl::<TextLine>(refs)?;
    check_alignment("hypotheses", &ids(&hyp_lines), "references", &ids(&ref_lines))?;
    let hyp_by_id: HashMap<&str, &str> = hyp_lines
        .iter()
        .map(|(id, l)| (id.as_str(), l.text.as_str()))
        .collect();

    let vectors = match embeddings {
        Some(files) => {
            let h = read_jsonl::<EmbeddingLine>(&files.hypotheses)?;
            let r = read_jsonl::<EmbeddingLine>(&files.references)?;
            for (label, lines) in [("hypothesis embeddings", &h), ("reference embeddings", &r)] {
                check_alignment("references", &ids(&ref_lines), label, &ids(lines))?;
            }
            let h: HashMap<String, Vec<Vec<f64>>> = h.into_iter().map(|(id, l)| (id, l.vectors)).collect();
            let r: HashMap<String, Vec<Vec<f64>>> = r.into_iter().map(|(id, l)| (id, l.vectors)).collect();
            Some((h, r))
        }
        None => None,
    };

    let inputs: Vec<ScoringInput<'_>> = ref_lines
        .iter()
        .map(|(id, line)| ScoringInput {
            id,
            hypothesis: hyp_by_id[id.as_str()],
            reference: &line.text,
            embeddings: vectors
                .as_ref()
                .map(|(h, r)| (h[id].as_slice(), r[id].as_slice())),
            logprobs: None,
        })
        .collect();
    let scores = score_corpus(&inputs)?;
    snapshot_from_scores(&scores)
}

/// Human-readable rows, one metric per line, as `mean ± std`.
pub fn format_snapshot(snapshot: &MetricsSnapshot) -> String {
    let mut out = String::new();
    let mut row = |name: &str, v: Option<ape_core::MeanStd>| {
        if let Some(v) = v {
            let _ = writeln!(out, "{name:<12}{v:.3}");
        }
    };
    row("BLEU", Some(snapshot.bleu));
    row("ROUGE-1", Some(snapshot.rouge1_f1));
    row("BERTScore", snapshot.bertscore_f1);
    row("Perplexity", snapshot.perplexity);
    let _ = writeln!(out, "{:<12}{}", "n", snapshot.n_examples);
    out
}

/// Rebuilds `report.json` and `series_normalized.csv` for a run directory.
pub fn report(dir: &Path) -> Result<Report> {
    let report = build_report(dir)?;
    write_report(dir, &report)?;
    Ok(report)
}

pub const RATINGS_JSON: &str = "ratings_summary.json";
pub const RATINGS_CSV: &str = "ratings_summary.csv";

/// Aggregates a ratings file, optionally writing JSON and CSV summaries.
pub fn ratings(csv_path: &Path, out: Option<&Path>) -> Result<Vec<CriterionSummary>> {
    let table = RatingsTable::from_path(csv_path)?;
    let summary = aggregate_ratings(&table)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::File {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let json = serde_json::to_string_pretty(&summary)?;
        let path = dir.join(RATINGS_JSON);
        std::fs::write(&path, json + "\n").map_err(|e| Error::File { path, source: e })?;
        let mut w = csv::Writer::from_path(dir.join(RATINGS_CSV))?;
        for row in &summary {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(summary)
}
