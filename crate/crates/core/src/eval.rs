//! Detection-quality scoring and sensitivity sweeps.
//!
//! Flagging is scored at the sample level as binary classification against
//! the poison ground truth. A scenario bundles a clean corpus, a suspect
//! base, and an attack; `run_scenario` executes the whole pipeline
//! (poison, train, scan, purify, score) and `run_sweep` repeats it along one
//! configuration axis, marking failed points instead of aborting.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{poison, AttackConfig, PoisonRecord};
use crate::corpus::Dataset;
use crate::detector::{identify_triggers, purify, DetectorConfig, TriggerReport};
use crate::error::{Error, Result};
use crate::ngram::{EntropyMode, NGramModel};
use crate::tokenizer::TokenizerMode;

/// Sample-level detection quality against ground truth.
///
/// Wall time is measured by the pipeline but intentionally left out of
/// serialized artifacts so that reruns with the same seed produce
/// byte-identical files; it is reported on the console instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub flagged_ids: Vec<String>,
    pub truth_ids: Vec<String>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub fpr: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    #[serde(skip)]
    pub wall_time_secs: Option<f64>,
}

/// Score a flagged set against ground truth over one dataset. Both sets must
/// be subsets of the dataset ids.
pub fn score(
    dataset: &Dataset,
    flagged: &HashSet<String>,
    truth: &HashSet<String>,
) -> Result<DetectionOutcome> {
    let ids: HashSet<&str> = dataset.ids().collect();
    for id in flagged.iter().chain(truth) {
        if !ids.contains(id.as_str()) {
            return Err(Error::UnknownId { id: id.clone() });
        }
    }

    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    let mut flagged_ids = Vec::new();
    let mut truth_ids = Vec::new();
    for sample in &dataset.samples {
        let is_flagged = flagged.contains(&sample.id);
        let is_poisoned = truth.contains(&sample.id);
        if is_flagged {
            flagged_ids.push(sample.id.clone());
        }
        if is_poisoned {
            truth_ids.push(sample.id.clone());
        }
        match (is_flagged, is_poisoned) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }

    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        // No poisoned samples to find: vacuously complete.
        1.0
    };
    let fpr = if fp + tn > 0 {
        fp as f64 / (fp + tn) as f64
    } else {
        0.0
    };
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };

    Ok(DetectionOutcome {
        flagged_ids,
        truth_ids,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        fpr,
        recall,
        precision,
        f1,
        wall_time_secs: None,
    })
}

/// One end-to-end experiment: poison a suspect base, train on a clean
/// corpus, scan, purify, score.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub clean: Dataset,
    pub suspect_base: Dataset,
    pub attack: AttackConfig,
    pub n: usize,
    pub discount: f64,
    pub k: usize,
    pub max_seq_len: usize,
    pub tokenizer_mode: TokenizerMode,
    pub entropy_mode: EntropyMode,
    /// Use only the first N clean samples (corpus-size sweeps).
    pub clean_size: Option<usize>,
    /// Use only the first N suspect samples (dataset-size sweeps).
    pub suspect_size: Option<usize>,
}

impl Scenario {
    pub fn new(clean: Dataset, suspect_base: Dataset, attack: AttackConfig) -> Self {
        Scenario {
            clean,
            suspect_base,
            attack,
            n: 4,
            discount: 0.4,
            k: 10,
            max_seq_len: 2048,
            tokenizer_mode: TokenizerMode::Fine,
            entropy_mode: EntropyMode::PerToken,
            clean_size: None,
            suspect_size: None,
        }
    }
}

/// Per-stage wall times in seconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub poison_secs: f64,
    pub train_secs: f64,
    pub scan_secs: f64,
    pub purify_secs: f64,
}

impl StageTimings {
    pub fn total_secs(&self) -> f64 {
        self.poison_secs + self.train_secs + self.scan_secs + self.purify_secs
    }
}

/// Everything a scenario run produces.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub outcome: DetectionOutcome,
    pub report: TriggerReport,
    pub records: Vec<PoisonRecord>,
    pub purified: Dataset,
    pub removed: Dataset,
    pub timings: StageTimings,
}

pub fn run_scenario(sc: &Scenario) -> Result<ScenarioRun> {
    let clean = match sc.clean_size {
        Some(n) => sc.clean.head(n),
        None => sc.clean.clone(),
    };
    let suspect_base = match sc.suspect_size {
        Some(n) => sc.suspect_base.head(n),
        None => sc.suspect_base.clone(),
    };

    let mut timings = StageTimings::default();

    let t = Instant::now();
    let (poisoned, records) = poison(&suspect_base, &sc.attack)?;
    timings.poison_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let model = NGramModel::train(&clean, sc.n, sc.discount, sc.tokenizer_mode)?;
    timings.train_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let detector_cfg = DetectorConfig {
        k: sc.k,
        max_seq_len: sc.max_seq_len,
        entropy_mode: sc.entropy_mode,
    };
    let report = identify_triggers(&model, &poisoned, &detector_cfg)?;
    timings.scan_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (purified, removed) = purify(&poisoned, &report, &model.tokenizer());
    timings.purify_secs = t.elapsed().as_secs_f64();

    let flagged: HashSet<String> = removed.ids().map(str::to_string).collect();
    let truth: HashSet<String> = records.iter().map(|r| r.sample_id.clone()).collect();
    let mut outcome = score(&poisoned, &flagged, &truth)?;
    outcome.wall_time_secs = Some(timings.total_secs());

    Ok(ScenarioRun {
        outcome,
        report,
        records,
        purified,
        removed,
        timings,
    })
}

/// Axis a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "n")]
    N,
    #[serde(rename = "k")]
    K,
    #[serde(rename = "clean_size")]
    CleanSize,
    #[serde(rename = "rate")]
    Rate,
    #[serde(rename = "tokenizer_mode")]
    TokenizerMode,
    #[serde(rename = "dataset_size")]
    DatasetSize,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SweepAxis::N => "n",
            SweepAxis::K => "k",
            SweepAxis::CleanSize => "clean_size",
            SweepAxis::Rate => "rate",
            SweepAxis::TokenizerMode => "tokenizer_mode",
            SweepAxis::DatasetSize => "dataset_size",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepAxis::N),
            "k" => Ok(SweepAxis::K),
            "clean_size" => Ok(SweepAxis::CleanSize),
            "rate" => Ok(SweepAxis::Rate),
            "tokenizer_mode" => Ok(SweepAxis::TokenizerMode),
            "dataset_size" => Ok(SweepAxis::DatasetSize),
            other => Err(Error::UnknownMode {
                name: other.to_string(),
                expected: "n, k, clean_size, rate, tokenizer_mode, dataset_size".to_string(),
            }),
        }
    }
}

/// One point on a sweep axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepValue {
    Count(usize),
    Rate(f64),
    Mode(TokenizerMode),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Count(v) => write!(f, "{v}"),
            SweepValue::Rate(v) => write!(f, "{v}"),
            SweepValue::Mode(m) => write!(f, "{m}"),
        }
    }
}

/// A sweep: one axis, its values, and the fixed remaining configuration
/// supplied as the base scenario.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<SweepValue>,
}

impl SweepSpec {
    /// Parse CLI-style values for an axis.
    pub fn parse(axis: SweepAxis, raw_values: &[String]) -> Result<SweepSpec> {
        let mut values = Vec::with_capacity(raw_values.len());
        for raw in raw_values {
            let value = match axis {
                SweepAxis::N | SweepAxis::K | SweepAxis::CleanSize | SweepAxis::DatasetSize => {
                    SweepValue::Count(raw.parse().map_err(|_| Error::InvalidSweep {
                        message: format!("{axis} value {raw:?} is not a count"),
                    })?)
                }
                SweepAxis::Rate => SweepValue::Rate(raw.parse().map_err(|_| {
                    Error::InvalidSweep {
                        message: format!("rate value {raw:?} is not a number"),
                    }
                })?),
                SweepAxis::TokenizerMode => SweepValue::Mode(raw.parse()?),
            };
            values.push(value);
        }
        let spec = SweepSpec { axis, values };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidSweep {
                message: "no values given".to_string(),
            });
        }
        for pair in self.values.windows(2) {
            let ordered = match (&pair[0], &pair[1]) {
                (SweepValue::Count(a), SweepValue::Count(b)) => a < b,
                (SweepValue::Rate(a), SweepValue::Rate(b)) => a < b,
                (SweepValue::Mode(a), SweepValue::Mode(b)) => a != b,
                _ => false,
            };
            if !ordered {
                return Err(Error::InvalidSweep {
                    message: format!(
                        "values must be strictly ordered, got {} then {}",
                        pair[0], pair[1]
                    ),
                });
            }
        }
        for v in &self.values {
            let type_ok = matches!(
                (self.axis, v),
                (SweepAxis::N, SweepValue::Count(_))
                    | (SweepAxis::K, SweepValue::Count(_))
                    | (SweepAxis::CleanSize, SweepValue::Count(_))
                    | (SweepAxis::DatasetSize, SweepValue::Count(_))
                    | (SweepAxis::Rate, SweepValue::Rate(_))
                    | (SweepAxis::TokenizerMode, SweepValue::Mode(_))
            );
            if !type_ok {
                return Err(Error::InvalidSweep {
                    message: format!("value {v} does not fit axis {}", self.axis),
                });
            }
        }
        Ok(())
    }
}

/// One sweep row: either an outcome or the error that point produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub status: SweepStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<DetectionOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepStatus {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "failed")]
    Failed,
}

/// Plot-ready sweep result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Tab-separated table with one row per sweep point.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("value\tstatus\trecall\tfpr\tprecision\tf1\tflagged\n");
        for row in &self.rows {
            match (&row.status, &row.outcome) {
                (SweepStatus::Ok, Some(o)) => {
                    out.push_str(&format!(
                        "{}\tok\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
                        row.value,
                        o.recall,
                        o.fpr,
                        o.precision,
                        o.f1,
                        o.flagged_ids.len()
                    ));
                }
                _ => {
                    out.push_str(&format!("{}\tfailed\t-\t-\t-\t-\t-\n", row.value));
                }
            }
        }
        out
    }
}

fn apply_value(base: &Scenario, axis: SweepAxis, value: &SweepValue) -> Scenario {
    let mut sc = base.clone();
    match (axis, value) {
        (SweepAxis::N, SweepValue::Count(v)) => sc.n = *v,
        (SweepAxis::K, SweepValue::Count(v)) => sc.k = *v,
        (SweepAxis::CleanSize, SweepValue::Count(v)) => sc.clean_size = Some(*v),
        (SweepAxis::DatasetSize, SweepValue::Count(v)) => sc.suspect_size = Some(*v),
        (SweepAxis::Rate, SweepValue::Rate(v)) => sc.attack.rate = *v,
        (SweepAxis::TokenizerMode, SweepValue::Mode(m)) => sc.tokenizer_mode = *m,
        // validate() rules these out.
        _ => unreachable!("sweep value type mismatch"),
    }
    sc
}

/// Run the pipeline once per sweep value. A failing point becomes a `failed`
/// row and the sweep continues.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.values.len());
    for value in &spec.values {
        let sc = apply_value(base, spec.axis, value);
        let row = match run_scenario(&sc) {
            Ok(run) => SweepRow {
                value: value.to_string(),
                status: SweepStatus::Ok,
                outcome: Some(run.outcome),
                error: None,
            },
            Err(e) => {
                log::warn!("sweep point {}={} failed: {e}", spec.axis, value);
                SweepRow {
                    value: value.to_string(),
                    status: SweepStatus::Failed,
                    outcome: None,
                    error: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
    }
    Ok(SweepTable {
        axis: spec.axis,
        rows,
    })
}

/// Fraction of bootstrap resamples in which `mean(higher) > mean(lower)`.
pub fn bootstrap_mean_diff_confidence(
    higher: &[f64],
    lower: &[f64],
    iterations: usize,
    seed: u64,
) -> f64 {
    assert!(!higher.is_empty() && !lower.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = 0usize;
    for _ in 0..iterations {
        let mean_h = resample_mean(higher, &mut rng);
        let mean_l = resample_mean(lower, &mut rng);
        if mean_h > mean_l {
            wins += 1;
        }
    }
    wins as f64 / iterations as f64
}

fn resample_mean(values: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let n = values.len();
    let sum: f64 = (0..n).map(|_| values[rng.gen_range(0..n)]).sum();
    sum / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackStrategy;
    use crate::corpus::CodeSample;

    fn dataset_with_ids(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| {
                CodeSample::new(
                    format!("s{i:04}"),
                    format!("int value{} = read_file(name);\nif (value{} > 0) {{\n  total = total + value{};\n}}", i % 7, i % 7, i % 7),
                )
            })
            .collect();
        Dataset::new(samples, "test").unwrap()
    }

    fn ids(dataset: &Dataset, range: std::ops::Range<usize>) -> HashSet<String> {
        range.map(|i| dataset.samples[i].id.clone()).collect()
    }

    #[test]
    fn perfect_detection_metrics() {
        let d = dataset_with_ids(2000);
        let truth = ids(&d, 0..20);
        let outcome = score(&d, &truth, &truth).unwrap();
        assert_eq!(outcome.recall, 1.0);
        assert_eq!(outcome.fpr, 0.0);
        assert_eq!(outcome.precision, 1.0);
        assert_eq!(outcome.f1, 1.0);
        assert_eq!(outcome.true_positives, 20);
        assert_eq!(outcome.true_negatives, 1980);
    }

    #[test]
    fn overflagging_arithmetic() {
        // truth = 20 of 2000; flagged = truth plus 99 clean samples.
        let d = dataset_with_ids(2000);
        let truth = ids(&d, 0..20);
        let flagged = ids(&d, 0..119);
        let outcome = score(&d, &flagged, &truth).unwrap();
        assert_eq!(outcome.recall, 1.0);
        assert_eq!(outcome.false_positives, 99);
        assert!((outcome.fpr - 99.0 / 1980.0).abs() < 1e-12);
        assert!((outcome.fpr - 0.05).abs() < 1e-12);
        assert!((outcome.precision - 20.0 / 119.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_flagged_id_is_an_error() {
        let d = dataset_with_ids(10);
        let mut flagged = HashSet::new();
        flagged.insert("nope".to_string());
        assert!(matches!(
            score(&d, &flagged, &HashSet::new()),
            Err(Error::UnknownId { .. })
        ));
    }

    #[test]
    fn metric_identities_on_random_confusions() {
        let d = dataset_with_ids(300);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let mut flagged = HashSet::new();
            let mut truth = HashSet::new();
            for s in &d.samples {
                if rng.gen_bool(0.3) {
                    flagged.insert(s.id.clone());
                }
                if rng.gen_bool(0.1) {
                    truth.insert(s.id.clone());
                }
            }
            let o = score(&d, &flagged, &truth).unwrap();
            let tp = flagged.intersection(&truth).count();
            let fp = flagged.len() - tp;
            let fn_ = truth.len() - tp;
            let tn = d.len() - tp - fp - fn_;
            assert_eq!(o.true_positives, tp);
            assert_eq!(o.false_positives, fp);
            assert_eq!(o.false_negatives, fn_);
            assert_eq!(o.true_negatives, tn);
            if tp + fn_ > 0 {
                assert!((o.recall - tp as f64 / (tp + fn_) as f64).abs() < 1e-12);
            }
            if fp + tn > 0 {
                assert!((o.fpr - fp as f64 / (fp + tn) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scenario_pipeline_runs_end_to_end() {
        let clean = dataset_with_ids(120);
        let mut suspect = dataset_with_ids(80);
        for s in &mut suspect.samples {
            s.id = format!("t-{}", s.id);
        }
        let attack = AttackConfig::new(AttackStrategy::BadcodeFixed)
            .with_rate(0.1)
            .with_seed(5);
        let sc = Scenario::new(clean, suspect, attack);
        let run = run_scenario(&sc).unwrap();
        assert_eq!(run.records.len(), 8);
        assert_eq!(
            run.purified.len() + run.removed.len(),
            sc.suspect_base.len()
        );
        assert!(run.outcome.recall > 0.0);
        assert!(run.outcome.wall_time_secs.is_some());
    }

    #[test]
    fn sweep_marks_failed_points_and_continues() {
        let clean = dataset_with_ids(60);
        let mut suspect = dataset_with_ids(40);
        for s in &mut suspect.samples {
            s.id = format!("t-{}", s.id);
        }
        let attack = AttackConfig::new(AttackStrategy::BadcodeFixed)
            .with_rate(0.1)
            .with_seed(5);
        let sc = Scenario::new(clean, suspect, attack);
        // 0.001 of 40 samples rounds to zero and fails; 0.1 succeeds.
        let spec = SweepSpec {
            axis: SweepAxis::Rate,
            values: vec![SweepValue::Rate(0.001), SweepValue::Rate(0.1)],
        };
        let table = run_sweep(&sc, &spec).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].status, SweepStatus::Failed);
        assert!(table.rows[0].error.is_some());
        assert_eq!(table.rows[1].status, SweepStatus::Ok);
        let tsv = table.to_tsv();
        assert!(tsv.contains("failed"));
        assert!(tsv.lines().count() == 3);
    }

    #[test]
    fn sweep_is_deterministic() {
        let clean = dataset_with_ids(60);
        let mut suspect = dataset_with_ids(40);
        for s in &mut suspect.samples {
            s.id = format!("t-{}", s.id);
        }
        let attack = AttackConfig::new(AttackStrategy::BadcodeFixed)
            .with_rate(0.1)
            .with_seed(5);
        let sc = Scenario::new(clean, suspect, attack);
        let spec = SweepSpec::parse(SweepAxis::K, &["1".into(), "5".into(), "10".into()]).unwrap();
        let t1 = run_sweep(&sc, &spec).unwrap();
        let t2 = run_sweep(&sc, &spec).unwrap();
        assert_eq!(t1.to_tsv(), t2.to_tsv());
        assert_eq!(
            serde_json::to_string(&t1).unwrap(),
            serde_json::to_string(&t2).unwrap()
        );
    }

    #[test]
    fn sweep_values_must_be_strictly_ordered_and_typed() {
        assert!(SweepSpec::parse(SweepAxis::K, &["5".into(), "5".into()]).is_err());
        assert!(SweepSpec::parse(SweepAxis::K, &["10".into(), "5".into()]).is_err());
        assert!(SweepSpec::parse(SweepAxis::K, &[]).is_err());
        assert!(SweepSpec::parse(SweepAxis::Rate, &["fine".into()]).is_err());
        assert!(SweepSpec::parse(
            SweepAxis::TokenizerMode,
            &["fine".into(), "coarse".into()]
        )
        .is_ok());
    }

    #[test]
    fn bootstrap_confidence_behaves() {
        let high: Vec<f64> = (0..50).map(|i| 10.0 + (i % 5) as f64 * 0.1).collect();
        let low: Vec<f64> = (0..50).map(|i| 1.0 + (i % 5) as f64 * 0.1).collect();
        let c = bootstrap_mean_diff_confidence(&high, &low, 2000, 7);
        assert_eq!(c, 1.0);

        let same: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let c = bootstrap_mean_diff_confidence(&same, &same, 2000, 7);
        assert!(c > 0.3 && c < 0.7, "self-comparison should hover near 0.5, got {c}");
    }
}
