//! Command-line surface and the flat key-value config file backing it.
//!
//! Precedence for every tunable: explicit flag > config file > built-in
//! default. Required input paths are always flags.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "lotaru",
    version,
    about = "Estimate workflow task runtimes for every node of a heterogeneous cluster",
    long_about = "Profiles machines with microbenchmarks, trains per-task runtime models from \
                  two downsampled local workflow runs, and scales the local predictions to \
                  other nodes via CPU/I-O score ratios. Includes baseline estimators and an \
                  evaluation harness."
)]
pub struct Cli {
    /// Flat key-value config file (`key = value` lines) supplying defaults
    /// for optional flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure this machine's CPU, memory, and sequential I/O scores.
    Bench(BenchArgs),
    /// Print the halving ladder of downsampling partition sizes.
    PlanSamples(PlanArgs),
    /// Split a FASTQ file into partition files along the halving ladder.
    Split(SplitArgs),
    /// Fit per-task runtime models and CPU weights from local trace runs.
    Train(TrainArgs),
    /// Predict task runtimes for every profiled node from trained models.
    Predict(PredictArgs),
    /// Score estimators against observed runtimes on other nodes.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Node name recorded in the profile.
    #[arg(long, value_name = "NAME")]
    pub node: Option<String>,
    /// Minimum wall-clock time for the CPU benchmark, in seconds.
    #[arg(long, value_name = "SECS")]
    pub cpu_limit_secs: Option<f64>,
    /// Largest candidate checked per prime-verification pass.
    #[arg(long, value_name = "N")]
    pub max_prime: Option<u64>,
    /// Memory benchmark block size in bytes.
    #[arg(long, value_name = "BYTES")]
    pub mem_block: Option<usize>,
    /// Memory benchmark total buffer size in bytes.
    #[arg(long, value_name = "BYTES")]
    pub mem_total: Option<u64>,
    /// I/O benchmark file size in bytes.
    #[arg(long, value_name = "BYTES")]
    pub io_file_size: Option<u64>,
    /// I/O benchmark block size in bytes.
    #[arg(long, value_name = "BYTES")]
    pub io_block: Option<usize>,
    /// Directory for the I/O benchmark scratch file.
    #[arg(long, value_name = "DIR")]
    pub io_path: Option<PathBuf>,
    /// Write the profile here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Size of the original input, in whatever unit the split works on.
    #[arg(long, value_name = "N")]
    pub input_size: u64,
    /// Number of partitions in the ladder.
    #[arg(long, value_name = "N")]
    pub partitions: usize,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// FASTQ file to split (uncompressed).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Number of partitions in the ladder.
    #[arg(long, value_name = "N")]
    pub partitions: usize,
    /// Directory receiving the partition files.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Base name of the partition files; defaults to the input file stem.
    #[arg(long, value_name = "NAME")]
    pub stem: Option<String>,
}

/// Trace-file parsing options shared by `train` and `evaluate`.
#[derive(Debug, Args)]
pub struct TraceFormatArgs {
    /// Column delimiter of the trace file.
    #[arg(long, value_name = "CHAR")]
    pub delimiter: Option<char>,
    /// Unit of the input-size columns: bytes or mb (decimal megabytes).
    #[arg(long, value_name = "UNIT")]
    pub size_unit: Option<String>,
    /// Unit of the runtime column: ms or s.
    #[arg(long, value_name = "UNIT")]
    pub time_unit: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Trace file with the local normal- and reduced-frequency runs.
    #[arg(long, value_name = "FILE")]
    pub traces: PathBuf,
    /// Directory receiving one model file per task plus weights.csv.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Only train on records from this node.
    #[arg(long, value_name = "NODE")]
    pub local: Option<String>,
    /// CPU frequency of the normal-speed run, MHz (overrides trace metadata).
    #[arg(long, value_name = "MHZ")]
    pub freq_old: Option<f64>,
    /// CPU frequency of the reduced-speed run, MHz (overrides trace metadata).
    #[arg(long, value_name = "MHZ")]
    pub freq_new: Option<f64>,
    /// Gate the regression on |correlation| instead of the signed value.
    #[arg(long)]
    pub pearson_abs: bool,
    #[command(flatten)]
    pub format: TraceFormatArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory written by `train` (model files plus weights.csv).
    #[arg(long, value_name = "DIR")]
    pub models: PathBuf,
    /// Node profile file or directory of profile files.
    #[arg(long, value_name = "PATH")]
    pub profiles: PathBuf,
    /// Name of the profiled node the models were trained on.
    #[arg(long, value_name = "NODE")]
    pub local: Option<String>,
    /// Inline query as TASK=BYTES; repeatable.
    #[arg(long = "query", value_name = "TASK=BYTES")]
    pub query: Vec<String>,
    /// CSV file of queries with a `task,input_size` header.
    #[arg(long, value_name = "FILE")]
    pub queries: Option<PathBuf>,
    /// Credible-interval levels as a comma list in (0, 1).
    #[arg(long, value_name = "LIST")]
    pub levels: Option<String>,
    /// Truncate each node factor to two decimals before multiplying.
    #[arg(long)]
    pub truncate_factor: bool,
    /// Write the estimate matrix here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Trace file holding local training runs and target-node runs.
    #[arg(long, value_name = "FILE")]
    pub traces: PathBuf,
    /// Node profile file or directory of profile files.
    #[arg(long, value_name = "PATH")]
    pub profiles: PathBuf,
    /// Node whose records form the training set.
    #[arg(long, value_name = "NODE")]
    pub local: Option<String>,
    /// Estimators to score: comma list of lotaru, naive, online-m,
    /// online-p, or `all`.
    #[arg(long, value_name = "LIST")]
    pub estimator: Option<String>,
    /// Summary grouping: comma list of workflow, task, node, estimator.
    #[arg(long, value_name = "LIST")]
    pub group_by: Option<String>,
    /// Report format: csv or svg.
    #[arg(long, value_name = "FMT")]
    pub format: Option<String>,
    /// Directory receiving records.csv and the report files.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// CPU frequency of the normal-speed run, MHz (overrides trace metadata).
    #[arg(long, value_name = "MHZ")]
    pub freq_old: Option<f64>,
    /// CPU frequency of the reduced-speed run, MHz (overrides trace metadata).
    #[arg(long, value_name = "MHZ")]
    pub freq_new: Option<f64>,
    /// Gate the regression on |correlation| instead of the signed value.
    #[arg(long)]
    pub pearson_abs: bool,
    #[command(flatten)]
    pub format_args: TraceFormatArgs,
}

/// Key-value pairs from the config file, keys normalized to snake_case.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl Settings {
    pub fn load(path: Option<&std::path::Path>) -> Result<Settings, CliError> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let content = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let mut values = BTreeMap::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {} is not `key = value`: {line}",
                    i + 1
                )));
            };
            values.insert(normalize_key(key), value.trim().to_string());
        }
        Ok(Settings { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value if given, else the config value, else `default`.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.resolve_opt(flag, key)?.unwrap_or(default))
    }

    /// Like `resolve` but without a default.
    pub fn resolve_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                CliError::Usage(format!("config key `{key}` has invalid value `{raw}`: {e}"))
            }),
        }
    }

    /// Boolean switch: the flag can only turn it on; otherwise the config
    /// value decides, defaulting to off.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        match self.raw(key) {
            None => Ok(false),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" | "on" => Ok(true),
                "0" | "false" | "no" | "off" => Ok(false),
                other => Err(CliError::Usage(format!(
                    "config key `{key}` must be a boolean, got `{other}`"
                ))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_keys_normalize_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lotaru.conf");
        std::fs::write(&path, "# comment\nfreq-old = 2000\nLocal = wally\n\n").unwrap();
        let s = Settings::load(Some(&path)).unwrap();

        let from_config: f64 = s.resolve(None, "freq_old", 0.0).unwrap();
        assert_eq!(from_config, 2000.0);
        let from_flag: f64 = s.resolve(Some(2700.0), "freq_old", 0.0).unwrap();
        assert_eq!(from_flag, 2700.0);
        let local: Option<String> = s.resolve_opt(None, "local").unwrap();
        assert_eq!(local.as_deref(), Some("wally"));
        let missing: f64 = s.resolve(None, "freq_new", 7.0).unwrap();
        assert_eq!(missing, 7.0);
    }

    #[test]
    fn malformed_config_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "no equals sign here\n").unwrap();
        assert!(matches!(
            Settings::load(Some(&path)),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn boolean_switch_parses_common_spellings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.conf");
        std::fs::write(&path, "pearson_abs = yes\ntruncate_factor = junk\n").unwrap();
        let s = Settings::load(Some(&path)).unwrap();
        assert!(s.switch(false, "pearson_abs").unwrap());
        assert!(s.switch(true, "truncate_factor").unwrap());
        assert!(s.switch(false, "truncate_factor").is_err());
        assert!(!s.switch(false, "unset").unwrap());
    }
}
