//! Prediction-error metrics and the end-to-end evaluation pipeline.
//!
//! Errors are relative (`|predicted − actual| / actual`), aggregated by the
//! median (MPE) plus percentile summaries and empirical CDFs. The pipeline
//! trains every requested estimator on local-machine records only and scores
//! it against the observed runtimes on every other node — the baselines get
//! no node adjustment, which is exactly the handicap under study.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::adjustment::{
    node_factor, task_weight, AdjustmentError, FrequencyPair, TaskWeight,
};
use crate::baselines::{
    naive_fit, naive_predict, online_fit, online_predict, BaselineError, NaiveModel, OnlineModel,
    OnlineVariant,
};
use crate::estimator::{fit_task_model_with, predict, EstimatorError, FitOptions, TaskModel};
use crate::profile::NodeProfile;
use crate::trace::{build_training_sets, effective_input_size, FreqMode, RunRecord, TraceError};
use crate::util;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("actual runtime must be positive, got {0} ms")]
    NonPositiveActual(f64),
    #[error("no error records to aggregate")]
    Empty,
    #[error("no training records from local node `{0}`")]
    NoTrainingData(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Adjustment(#[from] AdjustmentError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Relative prediction error `|predicted − actual| / actual`.
pub fn task_error(predicted: f64, actual: f64) -> Result<f64, EvaluationError> {
    if actual.is_nan() || actual <= 0.0 {
        return Err(EvaluationError::NonPositiveActual(actual));
    }
    Ok((predicted - actual).abs() / actual)
}

/// One scored prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub workflow: String,
    pub task: String,
    pub node: String,
    pub estimator: String,
    pub predicted_ms: f64,
    pub actual_ms: f64,
    pub err: f64,
}

impl ErrorRecord {
    pub fn new(
        workflow: &str,
        task: &str,
        node: &str,
        estimator: &str,
        predicted_ms: f64,
        actual_ms: f64,
    ) -> Result<ErrorRecord, EvaluationError> {
        Ok(ErrorRecord {
            workflow: workflow.to_string(),
            task: task.to_string(),
            node: node.to_string(),
            estimator: estimator.to_string(),
            predicted_ms,
            actual_ms,
            err: task_error(predicted_ms, actual_ms)?,
        })
    }
}

/// Fields error records can be grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Workflow,
    Task,
    Node,
    Estimator,
}

impl GroupKey {
    pub fn name(&self) -> &'static str {
        match self {
            GroupKey::Workflow => "workflow",
            GroupKey::Task => "task",
            GroupKey::Node => "node",
            GroupKey::Estimator => "estimator",
        }
    }

    fn extract<'a>(&self, r: &'a ErrorRecord) -> &'a str {
        match self {
            GroupKey::Workflow => &r.workflow,
            GroupKey::Task => &r.task,
            GroupKey::Node => &r.node,
            GroupKey::Estimator => &r.estimator,
        }
    }
}

impl FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<GroupKey, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "workflow" => Ok(GroupKey::Workflow),
            "task" => Ok(GroupKey::Task),
            "node" => Ok(GroupKey::Node),
            "estimator" => Ok(GroupKey::Estimator),
            other => Err(format!(
                "unknown group key `{other}` (expected workflow, task, node, or estimator)"
            )),
        }
    }
}

/// Aggregated errors of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    /// `(field name, value)` pairs in `group_by` order; empty for the global
    /// group.
    pub key: Vec<(String, String)>,
    /// Median prediction error (mean-of-middle-two for even counts).
    pub mpe: f64,
    pub mean: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub count: usize,
}

/// Group records by the requested keys and summarize each group. With an
/// empty `group_by` everything lands in one summary. Groups come back in
/// sorted key order.
pub fn summarize(
    records: &[ErrorRecord],
    group_by: &[GroupKey],
) -> Result<Vec<ErrorSummary>, EvaluationError> {
    if records.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let mut groups: BTreeMap<Vec<String>, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key: Vec<String> = group_by
            .iter()
            .map(|k| k.extract(r).to_string())
            .collect();
        groups.entry(key).or_default().push(r.err);
    }
    let summaries = groups
        .into_iter()
        .map(|(key_values, mut errs)| {
            errs.sort_by(f64::total_cmp);
            let n = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / n;
            let variance = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
            ErrorSummary {
                key: group_by
                    .iter()
                    .map(|k| k.name().to_string())
                    .zip(key_values)
                    .collect(),
                mpe: util::median(&errs),
                mean,
                p50: util::quantile_sorted(&errs, 0.50),
                p75: util::quantile_sorted(&errs, 0.75),
                p90: util::quantile_sorted(&errs, 0.90),
                p95: util::quantile_sorted(&errs, 0.95),
                min: errs[0],
                max: *errs.last().expect("group is non-empty"),
                stddev: variance.sqrt(),
                count: errs.len(),
            }
        })
        .collect();
    Ok(summaries)
}

/// Empirical CDF of the errors as step-function points `(err, fraction)`:
/// sorted by error, one point per distinct value, ending at fraction 1.
pub fn error_cdf(records: &[ErrorRecord]) -> Vec<(f64, f64)> {
    let mut errs: Vec<f64> = records.iter().map(|r| r.err).collect();
    errs.sort_by(f64::total_cmp);
    let n = errs.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, err) in errs.iter().enumerate() {
        let fraction = (i + 1) as f64 / n;
        match points.last_mut() {
            Some((last_err, last_fraction)) if last_err == err => *last_fraction = fraction,
            _ => points.push((*err, fraction)),
        }
    }
    points
}

/// Which estimator a pipeline run should score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EstimatorChoice {
    Lotaru,
    Naive,
    OnlineM,
    OnlineP,
}

impl EstimatorChoice {
    pub const ALL: [EstimatorChoice; 4] = [
        EstimatorChoice::Lotaru,
        EstimatorChoice::Naive,
        EstimatorChoice::OnlineM,
        EstimatorChoice::OnlineP,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorChoice::Lotaru => "lotaru",
            EstimatorChoice::Naive => "naive",
            EstimatorChoice::OnlineM => "online-m",
            EstimatorChoice::OnlineP => "online-p",
        }
    }
}

impl fmt::Display for EstimatorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<EstimatorChoice, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lotaru" => Ok(EstimatorChoice::Lotaru),
            "naive" => Ok(EstimatorChoice::Naive),
            "online-m" => Ok(EstimatorChoice::OnlineM),
            "online-p" => Ok(EstimatorChoice::OnlineP),
            other => Err(format!(
                "unknown estimator `{other}` (expected lotaru, naive, online-m, or online-p)"
            )),
        }
    }
}

/// A target execution the pipeline could not score, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedTarget {
    pub task: String,
    pub node: String,
    pub estimator: String,
    pub reason: String,
}

/// Scored predictions plus the targets that had to be skipped.
#[derive(Debug, Default)]
pub struct EvaluationOutcome {
    pub records: Vec<ErrorRecord>,
    pub skipped: Vec<SkippedTarget>,
}

struct FittedEstimators {
    models: BTreeMap<String, TaskModel>,
    weights: BTreeMap<String, TaskWeight>,
    naive: BTreeMap<String, NaiveModel>,
    online_m: BTreeMap<String, OnlineModel>,
    online_p: BTreeMap<String, OnlineModel>,
}

/// Train every requested estimator on the records from `local_node` and score
/// all Normal-mode executions observed on other nodes.
///
/// The main estimator's predictions are node-adjusted through the profile
/// scores; the baselines predict from local data alone. Targets that cannot
/// be scored (task never trained locally, node not profiled, missing input
/// size) are reported in `skipped` rather than aborting the run.
pub fn run_evaluation(
    records: &[RunRecord],
    profiles: &BTreeMap<String, NodeProfile>,
    local_node: &str,
    estimators: &[EstimatorChoice],
    freqs: &FrequencyPair,
    fit_options: &FitOptions,
) -> Result<EvaluationOutcome, EvaluationError> {
    let local: Vec<RunRecord> = records
        .iter()
        .filter(|r| r.node == local_node)
        .cloned()
        .collect();
    if local.is_empty() {
        return Err(EvaluationError::NoTrainingData(local_node.to_string()));
    }
    let sets = build_training_sets(&local)?;

    let mut fitted = FittedEstimators {
        models: BTreeMap::new(),
        weights: BTreeMap::new(),
        naive: BTreeMap::new(),
        online_m: BTreeMap::new(),
        online_p: BTreeMap::new(),
    };
    for (task, ts) in &sets {
        fitted.weights.insert(task.clone(), task_weight(ts, freqs));
        if ts.normal_runs.is_empty() {
            continue; // reduced-only task: nothing to train on
        }
        fitted
            .models
            .insert(task.clone(), fit_task_model_with(ts, fit_options)?);
        let tuples: Vec<(f64, f64)> = ts
            .normal_runs
            .iter()
            .map(|(x, y)| (*x as f64, *y))
            .collect();
        fitted.naive.insert(task.clone(), naive_fit(task, &tuples)?);
        fitted
            .online_m
            .insert(task.clone(), online_fit(task, &tuples, OnlineVariant::M)?);
        fitted
            .online_p
            .insert(task.clone(), online_fit(task, &tuples, OnlineVariant::P)?);
    }

    let local_profile = profiles.get(local_node);
    let mut outcome = EvaluationOutcome::default();

    for target in records {
        if target.node == local_node || target.freq_mode != FreqMode::Normal {
            continue;
        }
        let x = match effective_input_size(target) {
            Ok((size, _)) => size as f64,
            Err(e) => {
                for est in estimators {
                    outcome.skipped.push(SkippedTarget {
                        task: target.task.clone(),
                        node: target.node.clone(),
                        estimator: est.name().to_string(),
                        reason: e.to_string(),
                    });
                }
                continue;
            }
        };
        for est in estimators {
            let skip = |reason: String, outcome: &mut EvaluationOutcome| {
                outcome.skipped.push(SkippedTarget {
                    task: target.task.clone(),
                    node: target.node.clone(),
                    estimator: est.name().to_string(),
                    reason,
                });
            };
            let predicted = match est {
                EstimatorChoice::Lotaru => {
                    let (Some(model), Some(weight)) = (
                        fitted.models.get(&target.task),
                        fitted.weights.get(&target.task),
                    ) else {
                        skip(format!("task `{}` has no local model", target.task), &mut outcome);
                        continue;
                    };
                    let Some(local_profile) = local_profile else {
                        skip(format!("local node `{local_node}` is not profiled"), &mut outcome);
                        continue;
                    };
                    let Some(target_profile) = profiles.get(&target.node) else {
                        skip(format!("node `{}` is not profiled", target.node), &mut outcome);
                        continue;
                    };
                    let factor = node_factor(weight.w, local_profile, target_profile)?;
                    predict(model, x, &[]).mean_ms * factor
                }
                EstimatorChoice::Naive => match fitted.naive.get(&target.task) {
                    Some(m) => naive_predict(m, x),
                    None => {
                        skip(format!("task `{}` has no local model", target.task), &mut outcome);
                        continue;
                    }
                },
                EstimatorChoice::OnlineM => match fitted.online_m.get(&target.task) {
                    Some(m) => online_predict(m, x),
                    None => {
                        skip(format!("task `{}` has no local model", target.task), &mut outcome);
                        continue;
                    }
                },
                EstimatorChoice::OnlineP => match fitted.online_p.get(&target.task) {
                    Some(m) => online_predict(m, x),
                    None => {
                        skip(format!("task `{}` has no local model", target.task), &mut outcome);
                        continue;
                    }
                },
            };
            outcome.records.push(ErrorRecord::new(
                &target.workflow,
                &target.task,
                &target.node,
                est.name(),
                predicted,
                target.runtime_ms,
            )?);
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(estimator: &str, node: &str, err_numerator: f64) -> ErrorRecord {
        // actual 100 → err = err_numerator/100.
        ErrorRecord::new(
            "wf",
            "t",
            node,
            estimator,
            100.0 + err_numerator,
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn task_error_basics() {
        assert_eq!(task_error(110.0, 100.0).unwrap(), 0.10);
        assert_eq!(task_error(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(task_error(50.0, 200.0).unwrap(), 0.75);
        assert!(matches!(
            task_error(10.0, 0.0),
            Err(EvaluationError::NonPositiveActual(_))
        ));
        assert!(task_error(10.0, -5.0).is_err());
    }

    #[test]
    fn task_error_is_scale_invariant() {
        for k in [0.5, 3.0, 1e6] {
            let base = task_error(120.0, 100.0).unwrap();
            let scaled = task_error(120.0 * k, 100.0 * k).unwrap();
            assert!((base - scaled).abs() < 1e-12);
        }
    }

    #[test]
    fn summarize_median_conventions() {
        let records: Vec<ErrorRecord> =
            [10.0, 20.0, 30.0].iter().map(|e| record("a", "n", *e)).collect();
        let s = &summarize(&records, &[]).unwrap()[0];
        assert!((s.mpe - 0.2).abs() < 1e-12);
        assert_eq!(s.count, 3);

        let records: Vec<ErrorRecord> =
            [10.0, 30.0].iter().map(|e| record("a", "n", *e)).collect();
        let s = &summarize(&records, &[]).unwrap()[0];
        // Even count: mean of the two middle values.
        assert!((s.mpe - 0.2).abs() < 1e-12);
        assert_eq!(s.p50, s.mpe);
    }

    #[test]
    fn summarize_grid_by_node_and_estimator() {
        let mut records = Vec::new();
        for (est, node, errs) in [
            ("lotaru", "n1", [5.0, 10.0, 15.0]),
            ("lotaru", "n2", [20.0, 25.0, 30.0]),
            ("naive", "n1", [40.0, 50.0, 60.0]),
            ("naive", "n2", [70.0, 80.0, 90.0]),
        ] {
            for e in errs {
                records.push(record(est, node, e));
            }
        }
        let grid = summarize(&records, &[GroupKey::Node, GroupKey::Estimator]).unwrap();
        assert_eq!(grid.len(), 4);
        let find = |node: &str, est: &str| {
            grid.iter()
                .find(|s| {
                    s.key == vec![
                        ("node".to_string(), node.to_string()),
                        ("estimator".to_string(), est.to_string()),
                    ]
                })
                .unwrap()
        };
        assert!((find("n1", "lotaru").mpe - 0.10).abs() < 1e-12);
        assert!((find("n2", "lotaru").mpe - 0.25).abs() < 1e-12);
        assert!((find("n1", "naive").mpe - 0.50).abs() < 1e-12);
        assert!((find("n2", "naive").mpe - 0.80).abs() < 1e-12);
        for s in &grid {
            assert!(s.min <= s.mpe && s.mpe <= s.max);
            assert!(s.p50 <= s.p75 && s.p75 <= s.p90 && s.p90 <= s.p95);
        }
    }

    #[test]
    fn summarize_rejects_empty_input() {
        assert!(matches!(
            summarize(&[], &[GroupKey::Node]),
            Err(EvaluationError::Empty)
        ));
    }

    #[test]
    fn cdf_collapses_duplicates_and_ends_at_one() {
        let records = vec![
            record("a", "n", 10.0),
            record("a", "n", 10.0),
            record("a", "n", 30.0),
        ];
        let cdf = error_cdf(&records);
        assert_eq!(cdf.len(), 2);
        assert!((cdf[0].0 - 0.1).abs() < 1e-12);
        assert!((cdf[0].1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((cdf[1].0 - 0.3).abs() < 1e-12);
        assert_eq!(cdf[1].1, 1.0);
    }

    #[test]
    fn cdf_single_record() {
        let cdf = error_cdf(&[record("a", "n", 42.0)]);
        assert_eq!(cdf.len(), 1);
        assert_eq!(cdf[0].1, 1.0);
    }

    #[test]
    fn cdf_is_monotone() {
        let records: Vec<ErrorRecord> = [50.0, 10.0, 30.0, 10.0, 80.0, 42.0]
            .iter()
            .map(|e| record("a", "n", *e))
            .collect();
        let cdf = error_cdf(&records);
        for pair in cdf.windows(2) {
            assert!(pair[0].0 < pair[1].0);
            assert!(pair[0].1 < pair[1].1);
        }
        assert_eq!(cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn estimator_choice_parsing() {
        assert_eq!(
            "lotaru".parse::<EstimatorChoice>().unwrap(),
            EstimatorChoice::Lotaru
        );
        assert_eq!(
            "Online-P".parse::<EstimatorChoice>().unwrap(),
            EstimatorChoice::OnlineP
        );
        assert!("wild".parse::<EstimatorChoice>().is_err());
    }
}
