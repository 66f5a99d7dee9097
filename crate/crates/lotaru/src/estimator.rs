//! Per-task runtime models: a Pearson significance gate decides between a
//! Bayesian linear regression on input size and a median fallback.
//!
//! The regression uses the conjugate normal–inverse-gamma family on
//! standardized inputs, so its posterior predictive distribution is a
//! Student-t whose quantiles provide credible intervals at caller-chosen
//! levels. Standardization matters: raw byte-scale inputs (10^9) would make
//! any fixed prior precision meaningless.

use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::trace::TrainingSet;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("input lengths differ: {xs} xs vs {ys} ys")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("design is singular after standardization (all input sizes equal); use the median fallback")]
    SingularDesign,
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("training set for task `{0}` is empty")]
    EmptyTrainingSet(String),
    #[error("malformed model file: {0}")]
    MalformedModel(String),
}

/// Correlation must exceed this for a task to get a regression model.
pub const PEARSON_SIGNIFICANCE_THRESHOLD: f64 = 0.8;

/// Default credible levels reported alongside point predictions.
pub const DEFAULT_LEVELS: [f64; 3] = [0.5, 0.75, 0.95];

/// Sample Pearson correlation with its significance verdict.
///
/// `p` is `None` when the coefficient is undefined (zero variance in either
/// variable); an undefined coefficient is never significant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PearsonResult {
    pub p: Option<f64>,
    pub significant: bool,
}

impl PearsonResult {
    /// Apply the significance gate to a raw coefficient. The threshold is a
    /// strict `p > 0.8`; `on_abs` switches the gate to `|p| > 0.8` for data
    /// where strong negative correlation should also count.
    pub fn from_value(p: Option<f64>, on_abs: bool) -> PearsonResult {
        let significant = match p {
            Some(v) if on_abs => v.abs() > PEARSON_SIGNIFICANCE_THRESHOLD,
            Some(v) => v > PEARSON_SIGNIFICANCE_THRESHOLD,
            None => false,
        };
        PearsonResult { p, significant }
    }
}

fn check_xy(xs: &[f64], ys: &[f64]) -> Result<(), EstimatorError> {
    if xs.len() != ys.len() {
        return Err(EstimatorError::LengthMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(EstimatorError::TooFewPoints {
            needed: 2,
            got: xs.len(),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(EstimatorError::NonFinite);
    }
    Ok(())
}

/// Textbook sample Pearson coefficient with the default strict gate.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<PearsonResult, EstimatorError> {
    pearson_with_mode(xs, ys, false)
}

/// Pearson coefficient with a selectable gate (`on_abs` gates on `|p|`).
pub fn pearson_with_mode(
    xs: &[f64],
    ys: &[f64],
    on_abs: bool,
) -> Result<PearsonResult, EstimatorError> {
    check_xy(xs, ys)?;
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - x_mean;
        let dy = y - y_mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let p = if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    };
    Ok(PearsonResult::from_value(p, on_abs))
}

/// Prior for the regression: zero-mean Gaussian with precision λ on the
/// standardized coefficients, Inverse-Gamma(shape, rate) on the noise
/// variance. The defaults are weakly informative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesPrior {
    pub precision: f64,
    pub noise_shape: f64,
    pub noise_rate: f64,
}

impl Default for BayesPrior {
    fn default() -> Self {
        BayesPrior {
            precision: 1e-6,
            noise_shape: 1e-6,
            noise_rate: 1e-6,
        }
    }
}

impl BayesPrior {
    fn validate(&self) -> Result<(), EstimatorError> {
        if !self.precision.is_finite() || self.precision < 0.0 {
            return Err(EstimatorError::InvalidPrior(format!(
                "precision must be finite and non-negative, got {}",
                self.precision
            )));
        }
        if !(self.noise_shape.is_finite() && self.noise_shape > 0.0)
            || !(self.noise_rate.is_finite() && self.noise_rate > 0.0)
        {
            return Err(EstimatorError::InvalidPrior(
                "noise prior shape and rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Posterior of the Bayesian linear regression, in standardized coordinates
/// (`z = (x − x_mean)/x_scale`, `y' = y − y_mean`), together with the
/// standardization constants needed to map back to bytes/milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesPosterior {
    /// Posterior mean of (intercept, slope) over standardized inputs.
    pub mean: [f64; 2],
    /// Posterior covariance factor V_n (multiply by the noise variance to get
    /// the coefficient covariance); symmetric, positive diagonal.
    pub cov: [[f64; 2]; 2],
    /// Inverse-Gamma shape of the noise posterior.
    pub a_n: f64,
    /// Inverse-Gamma rate of the noise posterior.
    pub b_n: f64,
    /// Number of training observations.
    pub n: usize,
    pub x_mean: f64,
    pub x_scale: f64,
    pub y_mean: f64,
}

impl BayesPosterior {
    /// Posterior-mean coefficients in original units: `(intercept ms,
    /// slope ms/byte)`.
    pub fn coefficients(&self) -> (f64, f64) {
        let slope = self.mean[1] / self.x_scale;
        let intercept = self.y_mean + self.mean[0] - slope * self.x_mean;
        (intercept, slope)
    }

    /// Predictive mean and Student-t parameters (scale, degrees of freedom)
    /// at input size `x`.
    fn predictive(&self, x: f64) -> (f64, f64, f64) {
        let z = (x - self.x_mean) / self.x_scale;
        let xv = [1.0, z];
        let mean =
            self.y_mean + self.mean[0] + self.mean[1] * z;
        // x*ᵀ V x*
        let quad = xv[0] * (self.cov[0][0] * xv[0] + self.cov[0][1] * xv[1])
            + xv[1] * (self.cov[1][0] * xv[0] + self.cov[1][1] * xv[1]);
        let scale2 = (self.b_n / self.a_n) * (1.0 + quad);
        (mean, scale2.max(0.0).sqrt(), 2.0 * self.a_n)
    }
}

/// Conjugate update for `y = b0 + b1·x + ε`, `ε ~ N(0, σ²)`, on standardized
/// inputs: posterior covariance factor `(λI + XᵀX)⁻¹` and mean
/// `(λI + XᵀX)⁻¹ Xᵀy`.
pub fn fit_bayes_lr(
    xs: &[f64],
    ys: &[f64],
    prior: &BayesPrior,
) -> Result<BayesPosterior, EstimatorError> {
    check_xy(xs, ys)?;
    prior.validate()?;
    let n = xs.len();
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let x_var = xs.iter().map(|x| (x - x_mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let x_scale = x_var.sqrt();
    if x_scale == 0.0 {
        return Err(EstimatorError::SingularDesign);
    }

    let zs: Vec<f64> = xs.iter().map(|x| (x - x_mean) / x_scale).collect();
    let yc: Vec<f64> = ys.iter().map(|y| y - y_mean).collect();

    // A = λI + XᵀX with X = [1, z].
    let sz: f64 = zs.iter().sum();
    let szz: f64 = zs.iter().map(|z| z * z).sum();
    let sy: f64 = yc.iter().sum();
    let szy: f64 = zs.iter().zip(&yc).map(|(z, y)| z * y).sum();
    let syy: f64 = yc.iter().map(|y| y * y).sum();

    let a = [
        [prior.precision + nf, sz],
        [sz, prior.precision + szz],
    ];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det <= 0.0 || !det.is_finite() {
        return Err(EstimatorError::SingularDesign);
    }
    let cov = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    let xty = [sy, szy];
    let mean = [
        cov[0][0] * xty[0] + cov[0][1] * xty[1],
        cov[1][0] * xty[0] + cov[1][1] * xty[1],
    ];

    // b_n = b0 + (y'ᵀy' − m_nᵀ A m_n)/2; the residual term is non-negative
    // mathematically, so negative values can only be rounding noise.
    let m_am = mean[0] * (a[0][0] * mean[0] + a[0][1] * mean[1])
        + mean[1] * (a[1][0] * mean[0] + a[1][1] * mean[1]);
    let b_n = prior.noise_rate + ((syy - m_am) / 2.0).max(0.0);
    let a_n = prior.noise_shape + nf / 2.0;

    Ok(BayesPosterior {
        mean,
        cov,
        a_n,
        b_n,
        n,
        x_mean,
        x_scale,
        y_mean,
    })
}

/// What a task's model is: a regression posterior or a median of observed
/// runtimes (with the sorted sample kept for empirical interval bands).
#[derive(Debug, Clone, PartialEq)]
pub enum TaskModelKind {
    Regression(BayesPosterior),
    Median { median_ms: f64, samples: Vec<f64> },
}

/// Fitted per-task model plus the evidence that selected it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel {
    pub task: String,
    pub kind: TaskModelKind,
    pub pearson: PearsonResult,
    pub training_size: usize,
    /// Set when the training set was too small to judge correlation (a
    /// single observation).
    pub low_confidence: bool,
}

impl TaskModel {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            TaskModelKind::Regression(_) => "regression",
            TaskModelKind::Median { .. } => "median",
        }
    }
}

/// A point prediction with central credible intervals, sorted by level.
/// Every interval contains the mean; higher levels contain lower ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean_ms: f64,
    /// `(level, (lower, upper))`, ascending by level.
    pub intervals: Vec<(f64, (f64, f64))>,
    pub kind: &'static str,
}

/// Inverse empirical CDF (no interpolation): the smallest sample value whose
/// cumulative share reaches `q`. Keeps interval bounds at observed values,
/// so the lower-median center always lies inside every band.
fn quantile_empirical(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if q <= 0.0 {
        return sorted[0];
    }
    let idx = (q * n as f64).ceil() as usize;
    sorted[idx.saturating_sub(1).min(n - 1)]
}

/// Lower median: the left of the two middle values for even counts. The
/// deterministic tie-break keeps model files reproducible.
pub fn lower_median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_empirical(&sorted, 0.5)
}

fn clean_levels(levels: &[f64]) -> Vec<f64> {
    let mut cleaned: Vec<f64> = levels
        .iter()
        .copied()
        .filter(|l| l.is_finite() && *l > 0.0 && *l < 1.0)
        .collect();
    cleaned.sort_by(f64::total_cmp);
    cleaned.dedup();
    cleaned
}

/// Predict the runtime at input size `x` with central credible intervals at
/// the requested levels (values outside (0,1) are ignored). Median models
/// ignore `x`; their bands are empirical quantiles of the training runtimes.
pub fn predict(model: &TaskModel, x: f64, levels: &[f64]) -> Prediction {
    let levels = clean_levels(levels);
    match &model.kind {
        TaskModelKind::Median { median_ms, samples } => {
            let intervals = levels
                .iter()
                .map(|&level| {
                    let lo = quantile_empirical(samples, (1.0 - level) / 2.0);
                    let hi = quantile_empirical(samples, (1.0 + level) / 2.0);
                    (level, (lo, hi))
                })
                .collect();
            Prediction {
                mean_ms: *median_ms,
                intervals,
                kind: "median",
            }
        }
        TaskModelKind::Regression(posterior) => {
            let (mean, scale, df) = posterior.predictive(x);
            let intervals = levels
                .iter()
                .map(|&level| {
                    if scale > 0.0 {
                        let dist = StudentsT::new(mean, scale, df)
                            .expect("positive scale and degrees of freedom");
                        let lo = dist.inverse_cdf((1.0 - level) / 2.0);
                        let hi = dist.inverse_cdf((1.0 + level) / 2.0);
                        (level, (lo, hi))
                    } else {
                        (level, (mean, mean))
                    }
                })
                .collect();
            Prediction {
                mean_ms: mean,
                intervals,
                kind: "regression",
            }
        }
    }
}

/// Model-selection options: the Pearson gate mode and the regression prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Gate significance on `|p|` instead of `p`.
    pub pearson_on_abs: bool,
    pub prior: PriorChoice,
}

/// Wrapper so `FitOptions::default()` carries the default prior.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PriorChoice(pub BayesPrior);

/// Fit one task's model with default options: strict Pearson gate, default
/// prior.
pub fn fit_task_model(ts: &TrainingSet) -> Result<TaskModel, EstimatorError> {
    fit_task_model_with(ts, &FitOptions::default())
}

/// Fit one task's model: Pearson on (input size, runtime) of the
/// normal-speed runs; significant → regression, otherwise (or when the
/// regression is infeasible) the median of observed runtimes.
pub fn fit_task_model_with(
    ts: &TrainingSet,
    opts: &FitOptions,
) -> Result<TaskModel, EstimatorError> {
    if ts.normal_runs.is_empty() {
        return Err(EstimatorError::EmptyTrainingSet(ts.task.clone()));
    }
    let xs: Vec<f64> = ts.normal_runs.iter().map(|(x, _)| *x as f64).collect();
    let ys: Vec<f64> = ts.normal_runs.iter().map(|(_, y)| *y).collect();

    let mut sorted = ys.clone();
    sorted.sort_by(f64::total_cmp);
    let median_kind = TaskModelKind::Median {
        median_ms: quantile_empirical(&sorted, 0.5),
        samples: sorted,
    };

    if ys.len() < 2 {
        return Ok(TaskModel {
            task: ts.task.clone(),
            kind: median_kind,
            pearson: PearsonResult {
                p: None,
                significant: false,
            },
            training_size: 1,
            low_confidence: true,
        });
    }

    let pearson = pearson_with_mode(&xs, &ys, opts.pearson_on_abs)?;
    let kind = if pearson.significant {
        match fit_bayes_lr(&xs, &ys, &opts.prior.0) {
            Ok(posterior) => TaskModelKind::Regression(posterior),
            // Degenerate design despite a significant coefficient cannot
            // really happen (significance needs size variance), but the
            // fallback is the documented escape hatch either way.
            Err(EstimatorError::SingularDesign) => median_kind,
            Err(other) => return Err(other),
        }
    } else {
        median_kind
    };

    Ok(TaskModel {
        task: ts.task.clone(),
        kind,
        pearson,
        training_size: ys.len(),
        low_confidence: false,
    })
}

/// Version tag heading every model file.
pub const MODEL_FORMAT_VERSION: &str = "lotaru-task-model/1";

/// Serialize a model as versioned `key = value` text. Floats print through
/// Rust's shortest-round-trip formatting, so parsing the result reproduces
/// the model bit for bit.
pub fn write_task_model(model: &TaskModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_FORMAT_VERSION}");
    let _ = writeln!(out, "task = {}", model.task);
    let _ = writeln!(out, "kind = {}", model.kind_name());
    let _ = writeln!(out, "training_size = {}", model.training_size);
    let _ = writeln!(out, "low_confidence = {}", model.low_confidence);
    match model.pearson.p {
        Some(p) => {
            let _ = writeln!(out, "pearson = {p}");
        }
        None => {
            let _ = writeln!(out, "pearson = undefined");
        }
    }
    let _ = writeln!(out, "pearson_significant = {}", model.pearson.significant);
    match &model.kind {
        TaskModelKind::Regression(p) => {
            let _ = writeln!(out, "mean_intercept = {}", p.mean[0]);
            let _ = writeln!(out, "mean_slope = {}", p.mean[1]);
            let _ = writeln!(out, "cov_00 = {}", p.cov[0][0]);
            let _ = writeln!(out, "cov_01 = {}", p.cov[0][1]);
            let _ = writeln!(out, "cov_11 = {}", p.cov[1][1]);
            let _ = writeln!(out, "a_n = {}", p.a_n);
            let _ = writeln!(out, "b_n = {}", p.b_n);
            let _ = writeln!(out, "n = {}", p.n);
            let _ = writeln!(out, "x_mean = {}", p.x_mean);
            let _ = writeln!(out, "x_scale = {}", p.x_scale);
            let _ = writeln!(out, "y_mean = {}", p.y_mean);
        }
        TaskModelKind::Median { median_ms, samples } => {
            let _ = writeln!(out, "median_ms = {median_ms}");
            let joined: Vec<String> = samples.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "samples = {}", joined.join(","));
        }
    }
    out
}

/// Parse a model file produced by [`write_task_model`].
pub fn parse_task_model(content: &str) -> Result<TaskModel, EstimatorError> {
    let mut lines = content.lines().filter(|l| !l.trim().is_empty());
    let version = lines.next().map(str::trim).unwrap_or_default();
    if version != MODEL_FORMAT_VERSION {
        return Err(EstimatorError::MalformedModel(format!(
            "unsupported version line `{version}` (expected `{MODEL_FORMAT_VERSION}`)"
        )));
    }
    let mut map = std::collections::BTreeMap::new();
    for line in lines {
        let (key, value) = line.split_once('=').ok_or_else(|| {
            EstimatorError::MalformedModel(format!("expected `key = value`, got `{line}`"))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    let get = |key: &str| -> Result<&str, EstimatorError> {
        map.get(key)
            .map(String::as_str)
            .ok_or_else(|| EstimatorError::MalformedModel(format!("missing key `{key}`")))
    };
    let num = |key: &str| -> Result<f64, EstimatorError> {
        get(key)?
            .parse()
            .map_err(|_| EstimatorError::MalformedModel(format!("non-numeric `{key}`")))
    };

    let pearson_raw = get("pearson")?;
    let p = if pearson_raw == "undefined" {
        None
    } else {
        Some(pearson_raw.parse().map_err(|_| {
            EstimatorError::MalformedModel("non-numeric `pearson`".into())
        })?)
    };
    let significant = get("pearson_significant")? == "true";

    let kind = match get("kind")? {
        "regression" => TaskModelKind::Regression(BayesPosterior {
            mean: [num("mean_intercept")?, num("mean_slope")?],
            cov: [
                [num("cov_00")?, num("cov_01")?],
                [num("cov_01")?, num("cov_11")?],
            ],
            a_n: num("a_n")?,
            b_n: num("b_n")?,
            n: num("n")? as usize,
            x_mean: num("x_mean")?,
            x_scale: num("x_scale")?,
            y_mean: num("y_mean")?,
        }),
        "median" => {
            let samples_raw = get("samples")?;
            let samples: Vec<f64> = if samples_raw.is_empty() {
                Vec::new()
            } else {
                samples_raw
                    .split(',')
                    .map(|s| {
                        s.trim().parse().map_err(|_| {
                            EstimatorError::MalformedModel("non-numeric sample".into())
                        })
                    })
                    .collect::<Result<_, _>>()?
            };
            if samples.is_empty() {
                return Err(EstimatorError::MalformedModel(
                    "median model without samples".into(),
                ));
            }
            TaskModelKind::Median {
                median_ms: num("median_ms")?,
                samples,
            }
        }
        other => {
            return Err(EstimatorError::MalformedModel(format!(
                "unknown kind `{other}`"
            )))
        }
    };

    Ok(TaskModel {
        task: get("task")?.to_string(),
        kind,
        pearson: PearsonResult { p, significant },
        training_size: num("training_size")? as usize,
        low_confidence: get("low_confidence")? == "true",
    })
}
