//! Shared domain vocabulary: run configuration, metric snapshots, performance
//! states and per-iteration records.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the logistic growth model that sets the acceptance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapParams {
    /// Rate constant, per iteration.
    pub k: f64,
    /// Ceiling of the objective.
    pub s_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    1.0
}

impl Default for TapParams {
    fn default() -> Self {
        TapParams {
            k: 0.1,
            s_max: 1.0,
            dt: 1.0,
        }
    }
}

impl TapParams {
    pub fn new(k: f64, s_max: f64, dt: f64) -> Result<Self> {
        let params = TapParams { k, s_max, dt };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k", self.k), ("s_max", self.s_max), ("dt", self.dt)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("tap.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Metrics that can enter the scalar objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bleu,
    Rouge1,
    Bertscore,
    Perplexity,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Bleu,
        Metric::Rouge1,
        Metric::Bertscore,
        Metric::Perplexity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::Rouge1 => "rouge1",
            Metric::Bertscore => "bertscore",
            Metric::Perplexity => "perplexity",
        }
    }

    pub fn lower_is_better(self) -> bool {
        matches!(self, Metric::Perplexity)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Nonnegative metric weights; serialized as e.g. `{"bleu": 1.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectiveSpec(BTreeMap<Metric, f64>);

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec(BTreeMap::from([(Metric::Bleu, 1.0)]))
    }
}

impl ObjectiveSpec {
    pub fn new(weights: impl IntoIterator<Item = (Metric, f64)>) -> Result<Self> {
        let spec = ObjectiveSpec(weights.into_iter().collect());
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((m, w)) = self.0.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Config(format!(
                "objective weight for {m} must be nonnegative, got {w}"
            )));
        }
        if self.0.values().all(|&w| w == 0.0) {
            return Err(Error::Config("objective weights are all zero".into()));
        }
        Ok(())
    }

    pub fn weight(&self, metric: Metric) -> f64 {
        self.0.get(&metric).copied().unwrap_or(0.0)
    }

    /// Metrics with a strictly positive weight.
    pub fn weighted(&self) -> impl Iterator<Item = (Metric, f64)> + '_ {
        self.0.iter().filter(|(_, &w)| w > 0.0).map(|(&m, &w)| (m, w))
    }

    pub fn uses(&self, metric: Metric) -> bool {
        self.weight(metric) > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AcceptanceMode {
    /// Accept when the gain exceeds the logistic growth expected at the
    /// current state, scaled by `1 - margin`.
    LogisticThreshold {
        #[serde(default)]
        margin: f64,
    },
    /// Accept when the gain exceeds `min_rel_gain` times the current state.
    FixedRelative {
        #[serde(default = "default_min_rel_gain")]
        min_rel_gain: f64,
    },
}

fn default_min_rel_gain() -> f64 {
    0.02
}

impl Default for AcceptanceMode {
    fn default() -> Self {
        AcceptanceMode::LogisticThreshold { margin: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionStrategy {
    #[default]
    Random,
    Deficiency,
}

/// Trainer hyperparameters. The harness forwards them untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub epochs: u32,
    pub learning_rate: f64,
    pub grad_accum_steps: u32,
    pub label_smoothing: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            epochs: 3,
            learning_rate: 3e-6,
            grad_accum_steps: 4,
            label_smoothing: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Number of perturbation attempts.
    pub iterations: u32,
    /// Examples per perturbation batch.
    pub delta_d: usize,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub acceptance: AcceptanceMode,
    #[serde(default)]
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub selection: SelectionStrategy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tap: TapParams,
}

impl RunConfig {
    pub fn new(iterations: u32, delta_d: usize) -> Self {
        RunConfig {
            iterations,
            delta_d,
            hyperparams: Hyperparams::default(),
            acceptance: AcceptanceMode::default(),
            objective: ObjectiveSpec::default(),
            selection: SelectionStrategy::default(),
            seed: 0,
            tap: TapParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_d == 0 {
            return Err(Error::Config("delta_d must be at least 1".into()));
        }
        let ls = self.hyperparams.label_smoothing;
        if !(0.0..1.0).contains(&ls) {
            return Err(Error::Config(format!(
                "label_smoothing must lie in [0, 1), got {ls}"
            )));
        }
        match self.acceptance {
            AcceptanceMode::FixedRelative { min_rel_gain } => {
                if !(min_rel_gain.is_finite() && min_rel_gain > 0.0) {
                    return Err(Error::Config(format!(
                        "min_rel_gain must be positive, got {min_rel_gain}"
                    )));
                }
            }
            AcceptanceMode::LogisticThreshold { margin } => {
                if !(0.0..=1.0).contains(&margin) {
                    return Err(Error::Config(format!(
                        "acceptance margin must lie in [0, 1], got {margin}"
                    )));
                }
            }
        }
        self.objective.validate()?;
        self.tap.validate()
    }
}

/// Corpus-level mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn exact(value: f64) -> Self {
        MeanStd {
            mean: value,
            std: 0.0,
        }
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let precision = f.precision().unwrap_or(3);
        write!(f, "{:.*} ± {:.*}", precision, self.mean, precision, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub bleu: MeanStd,
    pub rouge1_f1: MeanStd,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bertscore_f1: Option<MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<MeanStd>,
    pub n_examples: usize,
}

impl MetricsSnapshot {
    pub fn get(&self, metric: Metric) -> Option<MeanStd> {
        match metric {
            Metric::Bleu => Some(self.bleu),
            Metric::Rouge1 => Some(self.rouge1_f1),
            Metric::Bertscore => self.bertscore_f1,
            Metric::Perplexity => self.perplexity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for metric in Metric::ALL {
            let Some(v) = self.get(metric) else { continue };
            let in_range = if metric == Metric::Perplexity {
                v.mean >= 1.0
            } else {
                (0.0..=1.0).contains(&v.mean)
            };
            if !in_range || !(v.std >= 0.0) {
                return Err(Error::Data(format!("{metric} summary {v} is out of range")));
            }
        }
        Ok(())
    }
}

/// Collapses a snapshot into the scalar objective: the weighted mean of the
/// metric means, with perplexity entering as its reciprocal so that larger is
/// always better.
pub fn aggregate_objective(snapshot: &MetricsSnapshot, spec: &ObjectiveSpec) -> Result<f64> {
    spec.validate()?;
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (metric, w) in spec.weighted() {
        let value = snapshot
            .get(metric)
            .ok_or(Error::MissingMetric(metric.name()))?
            .mean;
        let value = if metric == Metric::Perplexity {
            1.0 / value
        } else {
            value
        };
        weighted += w * value;
        total += w;
    }
    Ok(weighted / total)
}

/// S(t): the scalar objective at one iteration, with the metrics behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceState {
    pub iteration: u32,
    pub s_value: f64,
    pub snapshot: MetricsSnapshot,
}

/// Opaque learner-owned checkpoint handle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CheckpointToken(pub String);

impl fmt::Display for CheckpointToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One pass of the perturb, evaluate, decide loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub batch_ids: Vec<String>,
    pub s_before: f64,
    pub s_after_candidate: f64,
    pub delta_s: f64,
    pub theta: f64,
    pub accepted: bool,
    pub checkpoint_ref: CheckpointToken,
    pub wall_time_s: f64,
    /// Metrics of the candidate state, absent when the iteration failed
    /// before evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<MetricsSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn snapshot(bleu: f64, rouge: f64, ppl: Option<f64>) -> MetricsSnapshot {
        MetricsSnapshot {
            bleu: MeanStd::exact(bleu),
            rouge1_f1: MeanStd::exact(rouge),
            bertscore_f1: None,
            perplexity: ppl.map(MeanStd::exact),
            n_examples: 1,
        }
    }

    #[test]
    fn objective_bleu_only() {
        let s = aggregate_objective(&snapshot(0.062, 0.3, None), &ObjectiveSpec::default()).unwrap();
        assert_eq!(s, 0.062);
        let s = aggregate_objective(&snapshot(0.0, 0.3, None), &ObjectiveSpec::default()).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn objective_weighted_mean() {
        let spec = ObjectiveSpec::new([(Metric::Bleu, 1.0), (Metric::Rouge1, 1.0)]).unwrap();
        let s = aggregate_objective(&snapshot(0.4, 0.6, None), &spec).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn objective_inverts_perplexity() {
        let spec = ObjectiveSpec::new([(Metric::Perplexity, 1.0)]).unwrap();
        let s = aggregate_objective(&snapshot(0.1, 0.1, Some(8.0)), &spec).unwrap();
        assert_eq!(s, 0.125);
    }

    #[test]
    fn objective_missing_metric() {
        let spec = ObjectiveSpec::new([(Metric::Bertscore, 1.0)]).unwrap();
        let err = aggregate_objective(&snapshot(0.1, 0.1, None), &spec).unwrap_err();
        assert!(matches!(err, Error::MissingMetric("bertscore")));
    }

    #[test]
    fn objective_weights_validated() {
        assert!(ObjectiveSpec::new([(Metric::Bleu, 0.0)]).is_err());
        assert!(ObjectiveSpec::new([(Metric::Bleu, -1.0), (Metric::Rouge1, 2.0)]).is_err());
    }

    #[test]
    fn config_json_shape() {
        let json = r#"{
            "iterations": 17, "delta_d": 200,
            "acceptance": {"mode": "fixed_relative", "min_rel_gain": 0.02},
            "objective": {"bleu": 1.0, "rouge1": 0.5},
            "selection": "deficiency",
            "tap": {"k": 0.2, "s_max": 1.0}
        }"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.tap.dt, 1.0);
        assert_eq!(cfg.selection, SelectionStrategy::Deficiency);
        assert_eq!(cfg.hyperparams, Hyperparams::default());
        assert!(serde_json::from_str::<RunConfig>(r#"{"iterations":1,"delta_d":1,"bogus":3}"#).is_err());
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = RunConfig::new(3, 0);
        assert!(cfg.validate().is_err());
        cfg.delta_d = 5;
        cfg.acceptance = AcceptanceMode::FixedRelative { min_rel_gain: 0.0 };
        assert!(cfg.validate().is_err());
        cfg.acceptance = AcceptanceMode::default();
        cfg.hyperparams.label_smoothing = 1.0;
        assert!(cfg.validate().is_err());
        cfg.hyperparams.label_smoothing = 0.1;
        cfg.validate().unwrap();
    }

    proptest! {
        #[test]
        fn objective_monotone(
            bleu in 0.0f64..1.0, rouge in 0.0f64..1.0, ppl in 1.0f64..50.0,
            bump in 0.0f64..0.5, wb in 0.0f64..3.0, wr in 0.0f64..3.0, wp in 0.01f64..3.0,
        ) {
            let spec = ObjectiveSpec::new([
                (Metric::Bleu, wb), (Metric::Rouge1, wr), (Metric::Perplexity, wp),
            ]).unwrap();
            let base = aggregate_objective(&snapshot(bleu, rouge, Some(ppl)), &spec).unwrap();
            let up_bleu = aggregate_objective(&snapshot((bleu + bump).min(1.0), rouge, Some(ppl)), &spec).unwrap();
            let up_rouge = aggregate_objective(&snapshot(bleu, (rouge + bump).min(1.0), Some(ppl)), &spec).unwrap();
            let up_ppl = aggregate_objective(&snapshot(bleu, rouge, Some(ppl + bump)), &spec).unwrap();
            prop_assert!(up_bleu >= base);
            prop_assert!(up_rouge >= base);
            prop_assert!(up_ppl <= base);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
