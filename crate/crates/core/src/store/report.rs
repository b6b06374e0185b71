use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{load_record, write_json_atomic, REPORT_FILE, SERIES_FILE};
use crate::controller::RunRecord;
use crate::error::{Error, Result};
use crate::metrics::{improvement_pct, minmax_normalize};
use crate::tap::fit_k;
use crate::types::{Metric, MetricsSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: Metric,
    pub baseline: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    /// Relative change in percent, positive when the metric got better.
    /// Absent when the baseline is zero.
    pub improvement_pct: Option<f64>,
    /// "improvement" for larger-is-better metrics, "reduction" for perplexity.
    pub direction: String,
}

impl MetricRow {
    pub fn new(metric: Metric, baseline: f64, final_value: f64) -> Self {
        let lower = metric.lower_is_better();
        MetricRow {
            metric,
            baseline,
            final_value,
            improvement_pct: improvement_pct(baseline, final_value, lower).ok(),
            direction: if lower { "reduction" } else { "improvement" }.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub iteration: u32,
    pub s_before: f64,
    pub s_candidate: f64,
    pub delta_s: f64,
    pub theta: f64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Min-max normalized retained history, one column per metric. Row 0 is the
/// baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub iterations: usize,
    pub accepted_count: u32,
    pub baseline_s: f64,
    pub final_s: f64,
    pub metrics: Vec<MetricRow>,
    pub fitted_k: Option<f64>,
    pub timeline: Vec<TimelineEntry>,
    pub normalized: NormalizedSeries,
}

fn normalize(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Ok(vec![0.0; series.len()]);
    }
    minmax_normalize(series)
}

fn metric_columns(snapshots: &[MetricsSnapshot]) -> Vec<Metric> {
    Metric::ALL
        .into_iter()
        .filter(|m| snapshots.iter().all(|s| s.get(*m).is_some()))
        .collect()
}

impl Report {
    pub fn from_record(record: &RunRecord) -> Result<Self> {
        let snapshots = record.retained_snapshots();
        let columns = metric_columns(&snapshots);
        let metrics = columns
            .iter()
            .map(|&m| {
                let value = |s: &MetricsSnapshot| s.get(m).map(|v| v.mean).unwrap_or(f64::NAN);
                MetricRow::new(
                    m,
                    value(&record.baseline.snapshot),
                    value(&record.final_state.snapshot),
                )
            })
            .collect();

        let s_series = record.retained_series();
        let mut names = vec!["s".to_string()];
        let mut cols = vec![normalize(&s_series)?];
        for &m in &columns {
            names.push(m.name().to_string());
            let raw: Vec<f64> = snapshots
                .iter()
                .map(|s| s.get(m).expect("column filtered").mean)
                .collect();
            cols.push(normalize(&raw)?);
        }
        let rows = (0..s_series.len())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();

        let tap = &record.config.tap;
        let fitted_k = match fit_k(&s_series, tap.s_max, tap.dt) {
            Ok(k) => Some(k),
            Err(Error::DegenerateSeries(_)) => None,
            Err(e) => return Err(e),
        };

        Ok(Report {
            iterations: record.iterations.len(),
            accepted_count: record.accepted_count,
            baseline_s: record.baseline.s_value,
            final_s: record.final_state.s_value,
            metrics,
            fitted_k,
            timeline: record
                .iterations
                .iter()
                .map(|r| TimelineEntry {
                    iteration: r.iteration,
                    s_before: r.s_before,
                    s_candidate: r.s_after_candidate,
                    delta_s: r.delta_s,
                    theta: r.theta,
                    accepted: r.accepted,
                    error: r.error.clone(),
                })
                .collect(),
            normalized: NormalizedSeries {
                columns: names,
                rows,
            },
        })
    }
}

/// Builds the report for a run directory, finished or partial.
pub fn build_report(dir: &Path) -> Result<Report> {
    Report::from_record(&load_record(dir)?)
}

/// Writes `report.json` and `series_normalized.csv` into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    write_json_atomic(&dir.join(REPORT_FILE), report)?;
    let path = dir.join(SERIES_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&report.normalized.columns)?;
    for row in &report.normalized.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::file(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{CheckpointToken, IterationRecord, MeanStd, PerformanceState, RunConfig};

    fn snap(bleu: f64, rouge: f64, bert: f64, ppl: f64) -> MetricsSnapshot {
        MetricsSnapshot {
            bleu: MeanStd::exact(bleu),
            rouge1_f1: MeanStd::exact(rouge),
            bertscore_f1: Some(MeanStd::exact(bert)),
            perplexity: Some(MeanStd::exact(ppl)),
            n_examples: 1,
        }
    }

    fn run(steps: &[(MetricsSnapshot, bool)], base: MetricsSnapshot) -> RunRecord {
        let mut current = PerformanceState {
            iteration: 0,
            s_value: base.bleu.mean,
            snapshot: base,
        };
        let baseline = current.clone();
        let mut iterations = Vec::new();
        let mut accepted_count = 0;
        for (i, (cand, accepted)) in steps.iter().enumerate() {
            let t = i as u32 + 1;
            iterations.push(IterationRecord {
                iteration: t,
                batch_ids: vec![],
                s_before: current.s_value,
                s_after_candidate: cand.bleu.mean,
                delta_s: cand.bleu.mean - current.s_value,
                theta: 0.0,
                accepted: *accepted,
                checkpoint_ref: CheckpointToken(String::new()),
                wall_time_s: 0.0,
                candidate: Some(cand.clone()),
                error: None,
            });
            if *accepted {
                accepted_count += 1;
                current = PerformanceState {
                    iteration: t,
                    s_value: cand.bleu.mean,
                    snapshot: cand.clone(),
                };
            }
        }
        RunRecord {
            config: RunConfig::new(steps.len() as u32, 1),
            baseline,
            iterations,
            final_state: current,
            accepted_count,
        }
    }

    #[test]
    fn table_rows_from_stored_means() {
        let rec = run(
            &[(snap(0.083, 0.329, 0.398, 8.3), true)],
            snap(0.062, 0.290, 0.343, 13.0),
        );
        let report = Report::from_record(&rec).unwrap();
        let expect = [(Metric::Bleu, 33.9), (Metric::Rouge1, 13.4), (Metric::Bertscore, 16.0), (Metric::Perplexity, 36.2)];
        for (row, (m, pct)) in report.metrics.iter().zip(expect) {
            assert_eq!(row.metric, m);
            assert!((row.improvement_pct.unwrap() - pct).abs() <= 0.05, "{m}: {row:?}");
        }
        assert_eq!(report.metrics[3].direction, "reduction");
        assert_eq!(report.metrics[0].direction, "improvement");
    }

    #[test]
    fn rejected_candidates_do_not_enter_series() {
        let rec = run(
            &[
                (snap(0.75, 0.3, 0.4, 9.0), true),
                (snap(0.9, 0.9, 0.9, 2.0), false),
                (snap(1.0, 0.4, 0.5, 8.0), true),
            ],
            snap(0.5, 0.2, 0.3, 10.0),
        );
        let report = Report::from_record(&rec).unwrap();
        assert_eq!(report.normalized.columns, ["s", "bleu", "rouge1", "bertscore", "perplexity"]);
        let s: Vec<f64> = report.normalized.rows.iter().map(|r| r[0]).collect();
        assert_eq!(s, [0.0, 0.5, 0.5, 1.0]);
        let ppl: Vec<f64> = report.normalized.rows.iter().map(|r| r[4]).collect();
        assert_eq!(ppl, [1.0, 0.5, 0.5, 0.0]);
        assert_eq!(report.timeline.len(), 3);
        assert!(!report.timeline[1].accepted);
    }

    #[test]
    fn constant_series_normalizes_to_zero() {
        let base = snap(0.1, 0.2, 0.3, 10.0);
        let rec = run(&vec![(snap(0.05, 0.1, 0.1, 20.0), false); 4], base);
        let report = Report::from_record(&rec).unwrap();
        assert!(report.normalized.rows.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(report.fitted_k, Some(0.0));
        assert_eq!(report.metrics[0].improvement_pct, Some(0.0));
    }

    #[test]
    fn zero_baseline_has_no_percentage() {
        let rec = run(&[(snap(0.1, 0.1, 0.1, 5.0), true)], snap(0.0, 0.2, 0.3, 10.0));
        let report = Report::from_record(&rec).unwrap();
        assert_eq!(report.metrics[0].improvement_pct, None);
        assert!(report.fitted_k.is_none());
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let rec = run(&[(snap(0.2, 0.3, 0.4, 9.0), true)], snap(0.1, 0.2, 0.3, 10.0));
        let report = Report::from_record(&rec).unwrap();
        write_report(dir.path(), &report).unwrap();
        let text = std::fs::read_to_string(dir.path().join(SERIES_FILE)).unwrap();
        assert_eq!(text.lines().next().unwrap(), "s,bleu,rouge1,bertscore,perplexity");
        assert_eq!(text.lines().count(), 3);
        let back: Report =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
