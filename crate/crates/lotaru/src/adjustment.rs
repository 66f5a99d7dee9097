//! Conversion of local predictions into per-target-node estimates.
//!
//! The reduced-frequency local run reveals how CPU-bound each task is: a task
//! that is pure CPU slows down by the full frequency ratio, a pure-I/O task
//! not at all. That signal becomes a weight `w` blending the CPU-score and
//! I/O-score ratios between the local machine and each target into one
//! multiplicative runtime factor per task–node pair.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::estimator::{predict, Prediction, TaskModel};
use crate::profile::NodeProfile;
use crate::trace::TrainingSet;
use crate::util;

#[derive(Debug, Error)]
pub enum AdjustmentError {
    #[error("baseline runtime must be positive, got {0} ms")]
    NonPositiveBaseline(f64),
    #[error("frequencies must satisfy freq_old > freq_new > 0, got old={old} MHz, new={new} MHz")]
    BadFrequencies { old: f64, new: f64 },
    #[error("weight must lie in [0,1], got {0}")]
    BadWeight(f64),
    #[error("node `{node}` has a non-positive {score} score")]
    BadScore { node: String, score: &'static str },
    #[error("query references task `{0}` that has no fitted model")]
    UnknownTask(String),
    #[error("query references task `{0}` that has no task weight")]
    MissingWeight(String),
    #[error("node `{0}` has no profile")]
    UnknownNode(String),
}

/// Weight used when no reduced-frequency data exists for a task: CPU and I/O
/// influence the factor equally.
pub const DEFAULT_CPU_WEIGHT: f64 = 0.5;

/// Relative runtime deviation of a reduced-frequency run against its
/// normal-frequency partner: `(time_new − time_old)/time_old`. At a 20 %
/// frequency reduction a fully CPU-bound task lands near 0.25.
pub fn runtime_deviation(time_new: f64, time_old: f64) -> Result<f64, AdjustmentError> {
    if time_old.is_nan() || time_old <= 0.0 {
        return Err(AdjustmentError::NonPositiveBaseline(time_old));
    }
    Ok((time_new - time_old) / time_old)
}

/// Validated pair of local-run CPU frequencies (`old` = normal speed,
/// `new` = reduced speed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPair {
    old_mhz: f64,
    new_mhz: f64,
}

impl FrequencyPair {
    pub fn new(old_mhz: f64, new_mhz: f64) -> Result<FrequencyPair, AdjustmentError> {
        if !(new_mhz > 0.0 && old_mhz > new_mhz && old_mhz.is_finite()) {
            return Err(AdjustmentError::BadFrequencies {
                old: old_mhz,
                new: new_mhz,
            });
        }
        Ok(FrequencyPair { old_mhz, new_mhz })
    }

    pub fn old_mhz(&self) -> f64 {
        self.old_mhz
    }

    pub fn new_mhz(&self) -> f64 {
        self.new_mhz
    }
}

/// CPU weight: `w = max(0, min(1, median_dev / ((freq_old/freq_new) − 1)))`.
/// The denominator is the slowdown a fully CPU-bound task would show, so `w`
/// reads as "observed slowdown as a share of the fully-CPU-bound slowdown".
pub fn cpu_weight(median_dev: f64, freq_old: f64, freq_new: f64) -> Result<f64, AdjustmentError> {
    let freqs = FrequencyPair::new(freq_old, freq_new)?;
    Ok(cpu_weight_for(median_dev, &freqs))
}

fn cpu_weight_for(median_dev: f64, freqs: &FrequencyPair) -> f64 {
    let full_cpu_slowdown = freqs.old_mhz / freqs.new_mhz - 1.0;
    (median_dev / full_cpu_slowdown).clamp(0.0, 1.0)
}

/// Per-task CPU/I-O weighting derived from the paired local runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskWeight {
    pub task: String,
    /// Median of the per-pair runtime deviations (mean-of-middle-two for
    /// even counts); 0 when no pairs exist.
    pub median_dev: f64,
    pub w: f64,
    pub pair_count: usize,
    /// True when no usable reduced-frequency pair existed and `w` fell back
    /// to [`DEFAULT_CPU_WEIGHT`].
    pub no_reduced_run: bool,
}

/// Compute a task's weight from its normal/reduced run pairs. Pairs with a
/// non-positive baseline are skipped (the parsing layer already rejects
/// them); with no usable pairs the weight falls back to 0.5, flagged.
pub fn task_weight(ts: &TrainingSet, freqs: &FrequencyPair) -> TaskWeight {
    let devs: Vec<f64> = ts
        .pairs
        .iter()
        .filter(|p| p.time_old_ms > 0.0)
        .map(|p| (p.time_new_ms - p.time_old_ms) / p.time_old_ms)
        .collect();
    if devs.is_empty() {
        return TaskWeight {
            task: ts.task.clone(),
            median_dev: 0.0,
            w: DEFAULT_CPU_WEIGHT,
            pair_count: 0,
            no_reduced_run: true,
        };
    }
    let median_dev = util::median(&devs);
    TaskWeight {
        task: ts.task.clone(),
        median_dev,
        w: cpu_weight_for(median_dev, freqs),
        pair_count: devs.len(),
        no_reduced_run: false,
    }
}

fn mandatory_scores(profile: &NodeProfile) -> Result<(f64, f64), AdjustmentError> {
    if profile.cpu_events_per_sec.is_nan() || profile.cpu_events_per_sec <= 0.0 {
        return Err(AdjustmentError::BadScore {
            node: profile.node.clone(),
            score: "cpu_events_per_sec",
        });
    }
    if profile.read_iops.is_nan() || profile.read_iops <= 0.0 {
        return Err(AdjustmentError::BadScore {
            node: profile.node.clone(),
            score: "read_iops",
        });
    }
    Ok((profile.cpu_events_per_sec, profile.read_iops))
}

/// Runtime factor from the local machine to a target node:
/// `f_t = w·(cpu_local/cpu_target) + (1−w)·(io_local/io_target)`.
///
/// The I/O score is the sequential *read* IOPS — task inputs dominate the
/// I/O a runtime model cares about. Multiplying a local prediction by the
/// factor yields the target-node estimate; the factor is 1 exactly when
/// target and local scores coincide.
pub fn node_factor(
    w: f64,
    local: &NodeProfile,
    target: &NodeProfile,
) -> Result<f64, AdjustmentError> {
    if !(0.0..=1.0).contains(&w) || !w.is_finite() {
        return Err(AdjustmentError::BadWeight(w));
    }
    let (cpu_local, io_local) = mandatory_scores(local)?;
    let (cpu_target, io_target) = mandatory_scores(target)?;
    Ok(w * (cpu_local / cpu_target) + (1.0 - w) * (io_local / io_target))
}

/// Assembly options for [`build_estimate_matrix`].
#[derive(Debug, Clone, Copy, Default)]
pub struct MatrixOptions {
    /// Truncate each factor to two decimals before multiplying, mimicking a
    /// report that rounds the displayed factor and then multiplies the
    /// rounded value. Off by default — full precision predicts better.
    pub truncate_factor: bool,
}

/// One task–node estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateCell {
    pub task: String,
    pub node: String,
    pub input_size: u64,
    /// Local prediction with mean and interval bounds scaled by `factor`.
    pub prediction: Prediction,
    /// The factor that was multiplied in (post-truncation when enabled).
    pub factor: f64,
    pub w: f64,
    pub model_kind: &'static str,
}

/// Task × node table of adjusted runtime estimates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateMatrix {
    /// Query order × node-name order; deterministic for fixed inputs.
    pub cells: Vec<EstimateCell>,
}

fn truncate_two_decimals(f: f64) -> f64 {
    (f * 100.0).trunc() / 100.0
}

/// Predict every query on the local machine and scale it to every profiled
/// node. Each query is `(task, input size in bytes)`; every task must have a
/// fitted model and a weight, and the local node must be profiled.
pub fn build_estimate_matrix(
    models: &BTreeMap<String, TaskModel>,
    weights: &BTreeMap<String, TaskWeight>,
    profiles: &BTreeMap<String, NodeProfile>,
    local: &str,
    queries: &[(String, u64)],
    levels: &[f64],
    options: &MatrixOptions,
) -> Result<EstimateMatrix, AdjustmentError> {
    let local_profile = profiles
        .get(local)
        .ok_or_else(|| AdjustmentError::UnknownNode(local.to_string()))?;

    let mut cells = Vec::with_capacity(queries.len() * profiles.len());
    for (task, x) in queries {
        let model = models
            .get(task)
            .ok_or_else(|| AdjustmentError::UnknownTask(task.clone()))?;
        let weight = weights
            .get(task)
            .ok_or_else(|| AdjustmentError::MissingWeight(task.clone()))?;
        let local_prediction = predict(model, *x as f64, levels);

        for (node, profile) in profiles {
            let mut factor = node_factor(weight.w, local_profile, profile)?;
            if options.truncate_factor {
                factor = truncate_two_decimals(factor);
            }
            let mut prediction = local_prediction.clone();
            prediction.mean_ms *= factor;
            for (_, (lo, hi)) in &mut prediction.intervals {
                *lo *= factor;
                *hi *= factor;
            }
            cells.push(EstimateCell {
                task: task.clone(),
                node: node.clone(),
                input_size: *x,
                prediction,
                factor,
                w: weight.w,
                model_kind: model.kind_name(),
            });
        }
    }
    Ok(EstimateMatrix { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::fit_task_model;
    use crate::trace::PairedRun;

    fn profile(node: &str, cpu: f64, io: f64) -> NodeProfile {
        NodeProfile {
            node: node.into(),
            cpu_events_per_sec: cpu,
            flops: None,
            mem_score: None,
            read_iops: io,
            write_iops: io,
        }
    }

    #[test]
    fn deviation_basics() {
        assert_eq!(runtime_deviation(125.0, 100.0).unwrap(), 0.25);
        assert_eq!(runtime_deviation(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(runtime_deviation(90.0, 100.0).unwrap(), -0.10);
        assert!(matches!(
            runtime_deviation(50.0, 0.0),
            Err(AdjustmentError::NonPositiveBaseline(_))
        ));
    }

    #[test]
    fn cpu_weight_clamps_and_scales() {
        // 20 % reduction: 1000/800 − 1 = 0.25 denominator.
        assert_eq!(cpu_weight(0.25, 1000.0, 800.0).unwrap(), 1.0);
        assert_eq!(cpu_weight(-0.05, 1000.0, 800.0).unwrap(), 0.0);
        assert!((cpu_weight(0.10, 1000.0, 800.0).unwrap() - 0.4).abs() < 1e-12);
        // Over-full slowdown still clamps to 1.
        assert_eq!(cpu_weight(0.40, 1000.0, 800.0).unwrap(), 1.0);
    }

    #[test]
    fn cpu_weight_rejects_bad_frequencies() {
        assert!(cpu_weight(0.1, 800.0, 800.0).is_err());
        assert!(cpu_weight(0.1, 700.0, 800.0).is_err());
        assert!(cpu_weight(0.1, 800.0, 0.0).is_err());
    }

    #[test]
    fn node_factor_worked_example() {
        // Local 500/500, N1 400/300, N2 520/500 at w = 0.8.
        let local = profile("local", 500.0, 500.0);
        let n1 = profile("n1", 400.0, 300.0);
        let n2 = profile("n2", 520.0, 500.0);
        let f1 = node_factor(0.8, &local, &n1).unwrap();
        assert!((f1 - 4.0 / 3.0).abs() < 1e-12, "{f1}");
        let f2 = node_factor(0.8, &local, &n2).unwrap();
        assert!((f2 - (0.8 * 500.0 / 520.0 + 0.2)).abs() < 1e-12, "{f2}");
        assert!((f2 - 0.96923).abs() < 1e-4);
    }

    #[test]
    fn node_factor_is_exactly_one_on_the_local_node() {
        let local = profile("local", 458.0, 414.0);
        for w in [0.0, 0.25, 0.5, 0.8, 1.0, 0.123456789] {
            assert_eq!(node_factor(w, &local, &local).unwrap(), 1.0);
        }
    }

    #[test]
    fn node_factor_is_linear_in_w() {
        let local = profile("local", 500.0, 500.0);
        let target = profile("t", 400.0, 300.0);
        let at = |w: f64| node_factor(w, &local, &target).unwrap();
        let cpu_only = at(1.0);
        let io_only = at(0.0);
        assert_eq!(cpu_only, 500.0 / 400.0);
        assert_eq!(io_only, 500.0 / 300.0);
        assert!((at(0.5) - (cpu_only + io_only) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn node_factor_ratio_invariance() {
        let local = profile("local", 458.0, 414.0);
        let target = profile("t", 369.0, 306.0);
        let scaled_local = profile("local", 458.0 * 3.5, 414.0 * 3.5);
        let scaled_target = profile("t", 369.0 * 3.5, 306.0 * 3.5);
        let a = node_factor(0.7, &local, &target).unwrap();
        let b = node_factor(0.7, &scaled_local, &scaled_target).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn node_factor_validates_scores_and_weight() {
        let good = profile("g", 100.0, 100.0);
        let bad = profile("b", 0.0, 100.0);
        assert!(matches!(
            node_factor(0.5, &good, &bad),
            Err(AdjustmentError::BadScore { score: "cpu_events_per_sec", .. })
        ));
        assert!(matches!(
            node_factor(1.5, &good, &good),
            Err(AdjustmentError::BadWeight(_))
        ));
    }

    fn ts_with_pairs(devs: &[(f64, f64)]) -> TrainingSet {
        TrainingSet {
            task: "t".into(),
            normal_runs: vec![(1, 1.0)],
            reduced_runs: Vec::new(),
            pairs: devs
                .iter()
                .enumerate()
                .map(|(i, (old, new))| PairedRun {
                    partition_label: format!("p{i}"),
                    time_old_ms: *old,
                    time_new_ms: *new,
                })
                .collect(),
        }
    }

    #[test]
    fn task_weight_worked_examples() {
        let freqs = FrequencyPair::new(1000.0, 800.0).unwrap();
        // All pairs fully CPU-bound.
        let w = task_weight(&ts_with_pairs(&[(100.0, 125.0), (200.0, 250.0), (80.0, 100.0)]), &freqs);
        assert_eq!(w.w, 1.0);
        assert_eq!(w.pair_count, 3);
        assert!(!w.no_reduced_run);

        // Deviations 0.0, 0.25, 0.10 → median 0.10 → w = 0.4.
        let w = task_weight(
            &ts_with_pairs(&[(100.0, 100.0), (100.0, 125.0), (100.0, 110.0)]),
            &freqs,
        );
        assert!((w.median_dev - 0.10).abs() < 1e-12);
        assert!((w.w - 0.4).abs() < 1e-12);
    }

    #[test]
    fn task_weight_even_count_uses_mean_of_middle_two() {
        let freqs = FrequencyPair::new(1000.0, 800.0).unwrap();
        // Deviations 0.10 and 0.30 → median 0.20 → w = 0.8.
        let w = task_weight(&ts_with_pairs(&[(100.0, 110.0), (100.0, 130.0)]), &freqs);
        assert!((w.median_dev - 0.20).abs() < 1e-12);
        assert!((w.w - 0.8).abs() < 1e-12);
    }

    #[test]
    fn task_weight_without_pairs_falls_back() {
        let freqs = FrequencyPair::new(1000.0, 800.0).unwrap();
        let w = task_weight(&ts_with_pairs(&[]), &freqs);
        assert_eq!(w.w, DEFAULT_CPU_WEIGHT);
        assert!(w.no_reduced_run);
        assert_eq!(w.pair_count, 0);
    }

    fn table_fixture() -> (
        BTreeMap<String, TaskModel>,
        BTreeMap<String, TaskWeight>,
        BTreeMap<String, NodeProfile>,
    ) {
        // Constant local runtimes make the fitted model a median at exactly
        // 100 s regardless of input size.
        let ts = TrainingSet {
            task: "example".into(),
            normal_runs: vec![(100, 100_000.0), (200, 100_000.0), (400, 100_000.0)],
            reduced_runs: Vec::new(),
            pairs: Vec::new(),
        };
        let model = fit_task_model(&ts).unwrap();
        let mut models = BTreeMap::new();
        models.insert("example".to_string(), model);

        let mut weights = BTreeMap::new();
        weights.insert(
            "example".to_string(),
            TaskWeight {
                task: "example".into(),
                median_dev: 0.2,
                w: 0.8,
                pair_count: 3,
                no_reduced_run: false,
            },
        );

        let mut profiles = BTreeMap::new();
        profiles.insert("local".to_string(), profile("local", 500.0, 500.0));
        profiles.insert("n1".to_string(), profile("n1", 400.0, 300.0));
        profiles.insert("n2".to_string(), profile("n2", 520.0, 500.0));
        (models, weights, profiles)
    }

    #[test]
    fn matrix_truncation_mode_reproduces_displayed_factors() {
        let (models, weights, profiles) = table_fixture();
        let queries = vec![("example".to_string(), 800u64)];
        let matrix = build_estimate_matrix(
            &models,
            &weights,
            &profiles,
            "local",
            &queries,
            &[0.5],
            &MatrixOptions {
                truncate_factor: true,
            },
        )
        .unwrap();
        let by_node: BTreeMap<&str, &EstimateCell> = matrix
            .cells
            .iter()
            .map(|c| (c.node.as_str(), c))
            .collect();
        assert_eq!(by_node["local"].prediction.mean_ms, 100_000.0);
        assert_eq!(by_node["n1"].factor, 1.33);
        assert_eq!(by_node["n1"].prediction.mean_ms, 133_000.0);
        assert_eq!(by_node["n2"].factor, 0.96);
        assert_eq!(by_node["n2"].prediction.mean_ms, 96_000.0);
    }

    #[test]
    fn matrix_full_precision_mode() {
        let (models, weights, profiles) = table_fixture();
        let queries = vec![("example".to_string(), 800u64)];
        let matrix = build_estimate_matrix(
            &models,
            &weights,
            &profiles,
            "local",
            &queries,
            &[0.5],
            &MatrixOptions::default(),
        )
        .unwrap();
        let by_node: BTreeMap<&str, &EstimateCell> = matrix
            .cells
            .iter()
            .map(|c| (c.node.as_str(), c))
            .collect();
        assert!((by_node["n1"].prediction.mean_ms - 133333.3333).abs() < 0.34);
        assert!((by_node["n2"].prediction.mean_ms - 96923.0769).abs() < 0.08);
        assert_eq!(by_node["local"].prediction.mean_ms, 100_000.0);
        assert_eq!(by_node["local"].factor, 1.0);
    }

    #[test]
    fn matrix_scales_interval_bounds_and_preserves_order() {
        let ts = TrainingSet {
            task: "lin".into(),
            normal_runs: vec![(10, 100.0), (20, 205.0), (30, 310.0), (40, 395.0)],
            reduced_runs: Vec::new(),
            pairs: Vec::new(),
        };
        let mut models = BTreeMap::new();
        models.insert("lin".to_string(), fit_task_model(&ts).unwrap());
        let mut weights = BTreeMap::new();
        weights.insert(
            "lin".to_string(),
            TaskWeight {
                task: "lin".into(),
                median_dev: 0.1,
                w: 0.4,
                pair_count: 2,
                no_reduced_run: false,
            },
        );
        let mut profiles = BTreeMap::new();
        profiles.insert("local".to_string(), profile("local", 500.0, 400.0));
        profiles.insert("slow".to_string(), profile("slow", 250.0, 100.0));
        let matrix = build_estimate_matrix(
            &models,
            &weights,
            &profiles,
            "local",
            &[("lin".to_string(), 25)],
            &[0.5, 0.95],
            &MatrixOptions::default(),
        )
        .unwrap();
        for cell in &matrix.cells {
            assert!(cell.factor > 0.0);
            for (_, (lo, hi)) in &cell.prediction.intervals {
                assert!(lo <= &cell.prediction.mean_ms && &cell.prediction.mean_ms <= hi);
            }
        }
    }

    #[test]
    fn matrix_names_unknown_references() {
        let (models, weights, profiles) = table_fixture();
        let err = build_estimate_matrix(
            &models,
            &weights,
            &profiles,
            "local",
            &[("ghost".to_string(), 1)],
            &[0.5],
            &MatrixOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, AdjustmentError::UnknownTask(t) if t == "ghost"));

        let err = build_estimate_matrix(
            &models,
            &weights,
            &profiles,
            "nowhere",
            &[("example".to_string(), 1)],
            &[0.5],
            &MatrixOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, AdjustmentError::UnknownNode(n) if n == "nowhere"));
    }

    #[test]
    fn identical_profiles_give_identical_rows() {
        let (models, weights, mut profiles) = table_fixture();
        profiles.insert("n3".to_string(), profile("n3", 400.0, 300.0));
        // n3 matches n1's scores exactly.
        let matrix = build_estimate_matrix(
            &models,
            &weights,
            &profiles,
            "local",
            &[("example".to_string(), 800)],
            &[0.5],
            &MatrixOptions::default(),
        )
        .unwrap();
        let by_node: BTreeMap<&str, &EstimateCell> = matrix
            .cells
            .iter()
            .map(|c| (c.node.as_str(), c))
            .collect();
        assert_eq!(by_node["n1"].factor, by_node["n3"].factor);
        assert_eq!(
            by_node["n1"].prediction.mean_ms,
            by_node["n3"].prediction.mean_ms
        );
    }
}
