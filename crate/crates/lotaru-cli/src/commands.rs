//! One function per subcommand, plus the file-loading helpers they share.
//!
//! Commands never mutate their input files: inputs are opened read-only and
//! every product goes to `--out`/`--out-dir` or standard output. All output
//! orders are sorted (or follow explicit query order), so identical inputs
//! and flags produce byte-identical files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;

use lotaru::adjustment::{
    build_estimate_matrix, task_weight, FrequencyPair, MatrixOptions, TaskWeight,
};
use lotaru::estimator::{
    fit_task_model_with, parse_task_model, write_task_model, FitOptions, TaskModel,
};
use lotaru::evaluation::{
    error_cdf, run_evaluation, summarize, ErrorRecord, EstimatorChoice, GroupKey,
};
use lotaru::profile::{
    bench_cpu_prime, bench_io_sequential, bench_memory, parse_profiles, write_profile,
    NodeProfile,
};
use lotaru::report::{emit_report, LabeledCdf, ReportFormat};
use lotaru::sampling::{coverage_fraction, plan_partitions, read_fastq_records, split_fastq};
use lotaru::trace::{
    build_training_sets, parse_traces, ColumnMapping, ParsedTraces, RunRecord, SizeUnit,
    TimeUnit, TraceMetadata,
};

use crate::args::{
    BenchArgs, EvaluateArgs, PlanArgs, PredictArgs, Settings, SplitArgs, TraceFormatArgs,
    TrainArgs,
};
use crate::CliError;

// ---------- shared helpers ----------

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn require_path(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{what} `{}` does not exist", path.display())))
    }
}

/// Writer for `--out`; standard output when no path is given.
fn out_writer(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        None => Ok(Box::new(std::io::stdout().lock())),
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            Ok(Box::new(File::create(path)?))
        }
    }
}

fn column_mapping(args: &TraceFormatArgs, s: &Settings) -> Result<ColumnMapping, CliError> {
    let mut mapping = ColumnMapping::default();
    let delimiter: char = s.resolve(args.delimiter, "delimiter", ',')?;
    if !delimiter.is_ascii() {
        return Err(usage(format!("delimiter must be an ASCII character, got `{delimiter}`")));
    }
    mapping.delimiter = delimiter as u8;
    if let Some(unit) = s.resolve_opt(args.size_unit.clone(), "size_unit")? {
        mapping.size_unit = match unit.to_ascii_lowercase().as_str() {
            "bytes" | "b" => SizeUnit::Bytes,
            "mb" | "megabytes" => SizeUnit::Megabytes,
            other => return Err(usage(format!("unknown size unit `{other}` (expected bytes or mb)"))),
        };
    }
    if let Some(unit) = s.resolve_opt(args.time_unit.clone(), "time_unit")? {
        mapping.time_unit = match unit.to_ascii_lowercase().as_str() {
            "ms" | "milliseconds" => TimeUnit::Milliseconds,
            "s" | "sec" | "seconds" => TimeUnit::Seconds,
            other => return Err(usage(format!("unknown time unit `{other}` (expected ms or s)"))),
        };
    }
    Ok(mapping)
}

fn load_traces(path: &Path, mapping: &ColumnMapping) -> Result<ParsedTraces, CliError> {
    require_path(path, "trace file")?;
    let parsed = parse_traces(BufReader::new(File::open(path)?), mapping)?;
    for warning in &parsed.warnings {
        eprintln!("warning: row {}: {}", warning.row, warning.message);
    }
    for issue in &parsed.row_errors {
        eprintln!("warning: skipped row {}: {}", issue.row, issue.message);
    }
    Ok(parsed)
}

/// Frequencies from flags, config, or trace metadata — in that order.
fn resolve_freqs(
    flag_old: Option<f64>,
    flag_new: Option<f64>,
    s: &Settings,
    metadata: &TraceMetadata,
) -> Result<Option<FrequencyPair>, CliError> {
    let old = s.resolve_opt(flag_old, "freq_old")?.or(metadata.freq_old_mhz);
    let new = s.resolve_opt(flag_new, "freq_new")?.or(metadata.freq_new_mhz);
    match (old, new) {
        (Some(o), Some(n)) => FrequencyPair::new(o, n)
            .map(Some)
            .map_err(|e| usage(e.to_string())),
        (None, None) => Ok(None),
        _ => Err(usage(
            "both --freq-old and --freq-new are required when either is given",
        )),
    }
}

/// A frequency pair is only consulted when reduced-run pairs exist; without
/// any, a fixed placeholder keeps the weight computation on its fallback
/// path instead of demanding flags the data cannot use.
fn freqs_or_placeholder(
    freqs: Option<FrequencyPair>,
    any_reduced: bool,
) -> Result<FrequencyPair, CliError> {
    match freqs {
        Some(f) => Ok(f),
        None if any_reduced => Err(usage(
            "reduced-frequency runs are present but no frequencies are known; \
             pass --freq-old/--freq-new or add `# freq_old_mhz = ...` metadata to the traces",
        )),
        None => Ok(FrequencyPair::new(2.0, 1.0).expect("static placeholder")),
    }
}

fn load_profiles(path: &Path) -> Result<BTreeMap<String, NodeProfile>, CliError> {
    require_path(path, "profile path")?;
    let mut all = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "profile"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(usage(format!(
                "no .profile files in `{}`",
                path.display()
            )));
        }
        for file in files {
            all.extend(parse_profiles(&fs::read_to_string(&file)?)?);
        }
    } else {
        all = parse_profiles(&fs::read_to_string(path)?)?;
    }
    let mut map = BTreeMap::new();
    for profile in all {
        let node = profile.node.clone();
        if map.insert(node.clone(), profile).is_some() {
            return Err(usage(format!("node `{node}` is profiled more than once")));
        }
    }
    Ok(map)
}

fn parse_levels(raw: &str) -> Result<Vec<f64>, CliError> {
    let mut levels = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let level: f64 = part
            .parse()
            .map_err(|_| usage(format!("invalid credible level `{part}`")))?;
        if !(level > 0.0 && level < 1.0) {
            return Err(usage(format!(
                "credible level {level} must be strictly between 0 and 1"
            )));
        }
        levels.push(level);
    }
    if levels.is_empty() {
        return Err(usage("at least one credible level is required"));
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    Ok(levels)
}

fn parse_estimators(raw: &str) -> Result<Vec<EstimatorChoice>, CliError> {
    if raw.trim().eq_ignore_ascii_case("all") {
        return Ok(EstimatorChoice::ALL.to_vec());
    }
    let mut choices = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        choices.push(part.parse::<EstimatorChoice>().map_err(usage)?);
    }
    if choices.is_empty() {
        return Err(usage("at least one estimator is required"));
    }
    choices.sort();
    choices.dedup();
    Ok(choices)
}

fn parse_group_by(raw: &str) -> Result<Vec<GroupKey>, CliError> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    let mut keys = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let key = part.parse::<GroupKey>().map_err(usage)?;
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    Ok(keys)
}

/// Task names become file names; anything outside a safe set is replaced.
fn file_stem_for(task: &str) -> String {
    let stem: String = task
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if stem.is_empty() {
        "_".to_string()
    } else {
        stem
    }
}

// ---------- bench ----------

pub fn bench(args: BenchArgs, s: &Settings) -> Result<(), CliError> {
    let node = s.resolve(args.node, "node", "local".to_string())?;
    let cpu_limit = s.resolve(args.cpu_limit_secs, "cpu_limit_secs", 1.0)?;
    if !(cpu_limit > 0.0 && cpu_limit.is_finite()) {
        return Err(usage(format!("--cpu-limit-secs must be positive, got {cpu_limit}")));
    }
    let max_prime = s.resolve(args.max_prime, "max_prime", 10_000)?;
    let mem_block = s.resolve(args.mem_block, "mem_block", 1 << 20)?;
    let mem_total = s.resolve(args.mem_total, "mem_total", 128 << 20)?;
    let io_file_size = s.resolve(args.io_file_size, "io_file_size", 64 << 20)?;
    let io_block = s.resolve(args.io_block, "io_block", 1 << 16)?;
    let io_path = s.resolve_opt(args.io_path, "io_path")?;
    let io_dir = match io_path {
        Some(dir) => {
            require_path(&dir, "I/O benchmark directory")?;
            dir
        }
        None => std::env::temp_dir(),
    };

    eprintln!("measuring CPU score (>= {cpu_limit} s of prime verification)...");
    let cpu = bench_cpu_prime(Duration::from_secs_f64(cpu_limit), max_prime)?;
    eprintln!("measuring memory throughput ({mem_total} bytes)...");
    let mem = bench_memory(mem_block, mem_total)?;
    eprintln!("measuring sequential I/O ({io_file_size}-byte file in {})...", io_dir.display());
    let (read_iops, write_iops) = bench_io_sequential(io_file_size, io_block, &io_dir)?;

    let profile = NodeProfile {
        node,
        cpu_events_per_sec: cpu,
        flops: None,
        mem_score: Some(mem),
        read_iops,
        write_iops,
    };
    let mut writer = out_writer(args.out.as_deref())?;
    writer.write_all(write_profile(&profile).as_bytes())?;
    Ok(())
}

// ---------- plan-samples ----------

pub fn plan_samples(args: PlanArgs, _s: &Settings) -> Result<(), CliError> {
    let plan = plan_partitions(args.input_size, args.partitions)?;
    let coverage = coverage_fraction(&plan.sizes, args.input_size)?;
    if coverage.below_threshold {
        eprintln!(
            "warning: partitions cover only {:.1}% of the input; predictions from so \
             little data tend to be unstable",
            coverage.fraction * 100.0
        );
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "label,size")?;
    for (label, size) in plan.labels.iter().zip(&plan.sizes) {
        writeln!(out, "{label},{size}")?;
    }
    Ok(())
}

// ---------- split ----------

pub fn split(args: SplitArgs, _s: &Settings) -> Result<(), CliError> {
    require_path(&args.input, "input file")?;
    let records = read_fastq_records(BufReader::new(File::open(&args.input)?))?;
    let plan = plan_partitions(records.len() as u64, args.partitions)?;
    fs::create_dir_all(&args.out_dir)?;
    let stem = match args.stem {
        Some(stem) => stem,
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sample".to_string()),
    };
    // The records were already validated; re-open rather than re-join them.
    let paths = split_fastq(
        BufReader::new(File::open(&args.input)?),
        &plan,
        &args.out_dir,
        &stem,
    )?;
    let mut out = std::io::stdout().lock();
    for path in paths {
        writeln!(out, "{}", path.display())?;
    }
    Ok(())
}

// ---------- train ----------

const WEIGHTS_FILE: &str = "weights.csv";
const WEIGHTS_HEADER: [&str; 5] = ["task", "median_dev", "w", "pair_count", "no_reduced_run"];

pub fn train(args: TrainArgs, s: &Settings) -> Result<(), CliError> {
    let mapping = column_mapping(&args.format, s)?;
    let parsed = load_traces(&args.traces, &mapping)?;
    let local = s.resolve_opt(args.local, "local")?;
    let records: Vec<RunRecord> = match &local {
        Some(node) => parsed
            .records
            .iter()
            .filter(|r| &r.node == node)
            .cloned()
            .collect(),
        None => parsed.records.clone(),
    };
    if records.is_empty() {
        return Err(match local {
            Some(node) => usage(format!("no trace records from node `{node}`")),
            None => usage("the trace file holds no records"),
        });
    }

    let sets = build_training_sets(&records)?;
    let any_reduced = sets.values().any(|ts| !ts.reduced_runs.is_empty());
    let freqs = freqs_or_placeholder(
        resolve_freqs(args.freq_old, args.freq_new, s, &parsed.metadata)?,
        any_reduced,
    )?;
    let options = FitOptions {
        pearson_on_abs: s.switch(args.pearson_abs, "pearson_abs")?,
        ..FitOptions::default()
    };

    let mut fitted: Vec<(String, Result<TaskModel, _>, TaskWeight)> = sets
        .par_iter()
        .map(|(task, ts)| {
            (
                task.clone(),
                fit_task_model_with(ts, &options),
                task_weight(ts, &freqs),
            )
        })
        .collect();
    fitted.sort_by(|a, b| a.0.cmp(&b.0));

    fs::create_dir_all(&args.out)?;
    let mut stems: BTreeMap<String, String> = BTreeMap::new();
    let mut weights = Vec::with_capacity(fitted.len());
    for (task, model, weight) in fitted {
        let model = model?;
        let stem = file_stem_for(&task);
        if let Some(previous) = stems.insert(stem.clone(), task.clone()) {
            return Err(usage(format!(
                "tasks `{previous}` and `{task}` map to the same model file name `{stem}.model`"
            )));
        }
        fs::write(args.out.join(format!("{stem}.model")), write_task_model(&model))?;
        eprintln!(
            "task {task}: {} model from {} runs, w = {}{}",
            model.kind_name(),
            model.training_size,
            weight.w,
            if weight.no_reduced_run { " (no reduced runs; default weight)" } else { "" },
        );
        weights.push(weight);
    }

    let mut writer = csv::Writer::from_path(args.out.join(WEIGHTS_FILE))?;
    writer.write_record(WEIGHTS_HEADER)?;
    for w in &weights {
        writer.write_record([
            w.task.as_str(),
            &w.median_dev.to_string(),
            &w.w.to_string(),
            &w.pair_count.to_string(),
            &w.no_reduced_run.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

// ---------- predict ----------

/// Models and weights produced by `train`, keyed by task.
type TrainedBundle = (BTreeMap<String, TaskModel>, BTreeMap<String, TaskWeight>);

fn load_models(dir: &Path) -> Result<TrainedBundle, CliError> {
    require_path(dir, "model directory")?;
    if !dir.is_dir() {
        return Err(usage(format!("`{}` is not a directory", dir.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "model"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(format!("no .model files in `{}` (run `train` first)", dir.display())));
    }
    let mut models = BTreeMap::new();
    for file in files {
        let model = parse_task_model(&fs::read_to_string(&file)?)?;
        let task = model.task.clone();
        if models.insert(task.clone(), model).is_some() {
            return Err(usage(format!("task `{task}` has more than one model file")));
        }
    }

    let weights_path = dir.join(WEIGHTS_FILE);
    require_path(&weights_path, "weights file")?;
    let mut reader = csv::Reader::from_path(&weights_path)?;
    let bad = |message: String| usage(format!("{}: {message}", weights_path.display()));
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != WEIGHTS_HEADER {
        return Err(bad(format!("expected header {}", WEIGHTS_HEADER.join(","))));
    }
    let mut weights = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| row.get(i).unwrap_or_default().trim();
        let parse_f64 = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|e| bad(format!("bad number `{}`: {e}", field(i))))
        };
        let weight = TaskWeight {
            task: field(0).to_string(),
            median_dev: parse_f64(1)?,
            w: parse_f64(2)?,
            pair_count: field(3)
                .parse()
                .map_err(|e| bad(format!("bad pair count `{}`: {e}", field(3))))?,
            no_reduced_run: field(4)
                .parse()
                .map_err(|e| bad(format!("bad flag `{}`: {e}", field(4))))?,
        };
        weights.insert(weight.task.clone(), weight);
    }
    Ok((models, weights))
}

fn parse_queries(
    inline: &[String],
    file: Option<&Path>,
) -> Result<Vec<(String, u64)>, CliError> {
    let mut queries = Vec::new();
    for item in inline {
        let Some((task, size)) = item.rsplit_once('=') else {
            return Err(usage(format!("--query must look like TASK=BYTES, got `{item}`")));
        };
        if task.is_empty() {
            return Err(usage(format!("--query `{item}` has an empty task name")));
        }
        let size: u64 = size
            .trim()
            .parse()
            .map_err(|e| usage(format!("--query `{item}` has a bad size: {e}")))?;
        queries.push((task.to_string(), size));
    }
    if let Some(path) = file {
        require_path(path, "query file")?;
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers().map_err(|e| usage(e.to_string()))?;
        let index_of = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
        };
        let (Some(task_col), Some(size_col)) = (index_of("task"), index_of("input_size")) else {
            return Err(usage(format!(
                "query file `{}` needs `task` and `input_size` columns",
                path.display()
            )));
        };
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| usage(e.to_string()))?;
            let task = row.get(task_col).unwrap_or_default().trim();
            let raw_size = row.get(size_col).unwrap_or_default().trim();
            let size: u64 = raw_size.parse().map_err(|e| {
                usage(format!("query row {}: bad input size `{raw_size}`: {e}", i + 1))
            })?;
            queries.push((task.to_string(), size));
        }
    }
    if queries.is_empty() {
        return Err(usage("no queries given; use --query TASK=BYTES or --queries FILE"));
    }
    Ok(queries)
}

pub fn predict(args: PredictArgs, s: &Settings) -> Result<(), CliError> {
    let (models, weights) = load_models(&args.models)?;
    let profiles = load_profiles(&args.profiles)?;
    let local = s
        .resolve_opt(args.local, "local")?
        .ok_or_else(|| usage("--local is required (the node the models were trained on)"))?;
    if !profiles.contains_key(&local) {
        return Err(usage(format!("local node `{local}` has no profile")));
    }
    let levels = parse_levels(&s.resolve(args.levels, "levels", "0.5,0.95".to_string())?)?;
    let options = MatrixOptions {
        truncate_factor: s.switch(args.truncate_factor, "truncate_factor")?,
    };
    let queries = parse_queries(&args.query, args.queries.as_deref())?;

    let matrix = build_estimate_matrix(
        &models, &weights, &profiles, &local, &queries, &levels, &options,
    )?;

    let mut header: Vec<String> = ["task", "node", "input_size", "mean_ms"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for level in &levels {
        let pct = (level * 100.0).round() as u32;
        header.push(format!("lo{pct}"));
        header.push(format!("hi{pct}"));
    }
    header.extend(["factor", "w", "model_kind"].iter().map(|s| s.to_string()));

    let mut writer = csv::Writer::from_writer(out_writer(args.out.as_deref())?);
    writer.write_record(&header)?;
    for cell in &matrix.cells {
        let mut row = vec![
            cell.task.clone(),
            cell.node.clone(),
            cell.input_size.to_string(),
            cell.prediction.mean_ms.to_string(),
        ];
        for (_, (lo, hi)) in &cell.prediction.intervals {
            row.push(lo.to_string());
            row.push(hi.to_string());
        }
        row.push(cell.factor.to_string());
        row.push(cell.w.to_string());
        row.push(cell.model_kind.to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

// ---------- evaluate ----------

pub fn evaluate(args: EvaluateArgs, s: &Settings) -> Result<(), CliError> {
    let mapping = column_mapping(&args.format_args, s)?;
    let parsed = load_traces(&args.traces, &mapping)?;
    let profiles = load_profiles(&args.profiles)?;
    let local = s
        .resolve_opt(args.local, "local")?
        .ok_or_else(|| usage("--local is required (the node whose records train the models)"))?;
    let estimators = parse_estimators(&s.resolve(args.estimator, "estimator", "lotaru".to_string())?)?;
    let group_by = parse_group_by(&s.resolve(args.group_by, "group_by", "node,estimator".to_string())?)?;
    let format: ReportFormat = s
        .resolve(args.format, "format", "csv".to_string())?
        .parse()
        .map_err(usage)?;

    let any_reduced = parsed
        .records
        .iter()
        .any(|r| r.node == local && r.freq_mode == lotaru::trace::FreqMode::Reduced);
    let freqs = freqs_or_placeholder(
        resolve_freqs(args.freq_old, args.freq_new, s, &parsed.metadata)?,
        any_reduced,
    )?;
    let options = FitOptions {
        pearson_on_abs: s.switch(args.pearson_abs, "pearson_abs")?,
        ..FitOptions::default()
    };

    let outcome = run_evaluation(&parsed.records, &profiles, &local, &estimators, &freqs, &options)?;
    for skip in &outcome.skipped {
        eprintln!(
            "skipped {} on {} for {}: {}",
            skip.task, skip.node, skip.estimator, skip.reason
        );
    }

    let mut records = outcome.records;
    records.sort_by(|a, b| {
        (&a.estimator, &a.workflow, &a.task, &a.node)
            .cmp(&(&b.estimator, &b.workflow, &b.task, &b.node))
    });

    fs::create_dir_all(&args.out)?;
    let records_path = args.out.join("records.csv");
    write_records_csv(&records, &records_path)?;

    let summaries = summarize(&records, &group_by)?;
    let cdfs: Vec<LabeledCdf> = estimators
        .iter()
        .filter_map(|estimator| {
            let subset: Vec<ErrorRecord> = records
                .iter()
                .filter(|r| r.estimator == estimator.name())
                .cloned()
                .collect();
            if subset.is_empty() {
                None
            } else {
                Some(LabeledCdf {
                    label: estimator.name().to_string(),
                    points: error_cdf(&subset),
                })
            }
        })
        .collect();
    let written = emit_report(&summaries, &cdfs, format, &args.out)?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", records_path.display())?;
    for path in written {
        writeln!(out, "{}", path.display())?;
    }
    Ok(())
}

fn write_records_csv(records: &[ErrorRecord], path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["workflow", "task", "node", "estimator", "predicted_ms", "actual_ms", "err"])?;
    for r in records {
        writer.write_record([
            r.workflow.as_str(),
            r.task.as_str(),
            r.node.as_str(),
            r.estimator.as_str(),
            &r.predicted_ms.to_string(),
            &r.actual_ms.to_string(),
            &r.err.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
