//! Parsing, validation, and organization of task-execution trace records.
//!
//! Traces are delimiter-separated files with a named header row. A leading
//! block of `# key = value` comment lines may carry run metadata (notably the
//! CPU frequencies of the normal and reduced-speed local runs). Column names
//! are resolved through a configurable [`ColumnMapping`] because field names
//! vary across trace corpora; sizes and runtimes are converted to the internal
//! units (bytes, milliseconds) at the parsing boundary.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("missing required column for `{field}` (accepted headers: {candidates})")]
    MissingColumn {
        field: &'static str,
        candidates: String,
    },
    #[error("trace input has no header row")]
    EmptyInput,
    #[error("record for task `{task}` partition `{partition}` has neither an uncompressed nor a compressed input size")]
    NoInputSize { task: String, partition: String },
    #[error("duplicate record for task `{task}`, partition `{partition}`, mode {mode}")]
    DuplicateRecord {
        task: String,
        partition: String,
        mode: FreqMode,
    },
    #[error("records span multiple nodes ({nodes}); training sets need traces from exactly one machine")]
    MixedNodes { nodes: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// CPU-frequency mode of the local run a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FreqMode {
    Normal,
    Reduced,
}

impl fmt::Display for FreqMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FreqMode::Normal => write!(f, "Normal"),
            FreqMode::Reduced => write!(f, "Reduced"),
        }
    }
}

/// One observed task execution.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub workflow: String,
    pub task: String,
    pub node: String,
    /// On-disk (possibly compressed) input size in bytes, if recorded.
    pub input_size_compressed: Option<u64>,
    /// Logical payload size in bytes, if recorded. Preferred for prediction.
    pub input_size_uncompressed: Option<u64>,
    /// Wall-clock runtime in milliseconds; always > 0.
    pub runtime_ms: f64,
    pub freq_mode: FreqMode,
    /// Identifies which downsampled partition produced this record. May be
    /// empty for full-size (non-partition) executions.
    pub partition_label: String,
}

/// Which size field `effective_input_size` settled on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeSource {
    Uncompressed,
    /// Only the compressed size was available; predictions based on it are
    /// suspect because compression is non-linear in the payload size.
    CompressedFallback,
}

/// The input size a prediction should be based on: the uncompressed payload
/// size when present, otherwise the compressed size with a fallback marker.
/// A recorded size of zero counts as absent.
pub fn effective_input_size(r: &RunRecord) -> Result<(u64, SizeSource), TraceError> {
    let nonzero = |v: Option<u64>| v.filter(|&b| b > 0);
    match (
        nonzero(r.input_size_uncompressed),
        nonzero(r.input_size_compressed),
    ) {
        (Some(u), _) => Ok((u, SizeSource::Uncompressed)),
        (None, Some(c)) => Ok((c, SizeSource::CompressedFallback)),
        (None, None) => Err(TraceError::NoInputSize {
            task: r.task.clone(),
            partition: r.partition_label.clone(),
        }),
    }
}

/// Unit of the size columns in the input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizeUnit {
    #[default]
    Bytes,
    /// Decimal megabytes (1 MB = 10^6 bytes).
    Megabytes,
}

/// Unit of the runtime column in the input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeUnit {
    #[default]
    Milliseconds,
    Seconds,
}

/// Maps the required record fields onto column headers, with unit hints.
///
/// Each field accepts a list of candidate header names (matched
/// case-insensitively); the first one present in the file wins.
#[derive(Debug, Clone)]
pub struct ColumnMapping {
    pub delimiter: u8,
    pub size_unit: SizeUnit,
    pub time_unit: TimeUnit,
    pub workflow: Vec<String>,
    pub task: Vec<String>,
    pub node: Vec<String>,
    pub runtime: Vec<String>,
    pub input_size_compressed: Vec<String>,
    pub input_size_uncompressed: Vec<String>,
    pub freq_mode: Vec<String>,
    pub partition_label: Vec<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        ColumnMapping {
            delimiter: b',',
            size_unit: SizeUnit::Bytes,
            time_unit: TimeUnit::Milliseconds,
            workflow: names(&["Workflow"]),
            task: names(&["Task"]),
            node: names(&["Node", "Machine"]),
            runtime: names(&["Realtime", "Runtime"]),
            input_size_compressed: names(&["InputSizeCompressed"]),
            input_size_uncompressed: names(&["InputSizeUncompressed"]),
            freq_mode: names(&["FreqMode"]),
            partition_label: names(&["PartitionLabel", "Label"]),
        }
    }
}

impl ColumnMapping {
    /// Override the candidate headers for one field. Field names are the
    /// snake_case struct field names (`workflow`, `task`, `node`, `runtime`,
    /// `input_size_compressed`, `input_size_uncompressed`, `freq_mode`,
    /// `partition_label`).
    pub fn set_column(&mut self, field: &str, header: &str) -> Result<(), String> {
        let slot = match field {
            "workflow" => &mut self.workflow,
            "task" => &mut self.task,
            "node" => &mut self.node,
            "runtime" => &mut self.runtime,
            "input_size_compressed" => &mut self.input_size_compressed,
            "input_size_uncompressed" => &mut self.input_size_uncompressed,
            "freq_mode" => &mut self.freq_mode,
            "partition_label" => &mut self.partition_label,
            other => return Err(format!("unknown trace field `{other}`")),
        };
        *slot = vec![header.to_string()];
        Ok(())
    }
}

/// Run metadata from the leading `# key = value` comment block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceMetadata {
    /// CPU frequency of the normal-speed local run, MHz.
    pub freq_old_mhz: Option<f64>,
    /// CPU frequency of the reduced-speed local run, MHz.
    pub freq_new_mhz: Option<f64>,
    /// Any other metadata keys, kept verbatim.
    pub extra: BTreeMap<String, String>,
}

/// A rejected or suspicious data row. `row` is the 1-based index of the data
/// row (the header does not count).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParsedTraces {
    /// Valid records in file order.
    pub records: Vec<RunRecord>,
    pub metadata: TraceMetadata,
    /// Rows rejected with the reason; parsing continues past them.
    pub row_errors: Vec<RowIssue>,
    /// Soft validation findings (e.g. compressed size exceeding uncompressed).
    pub warnings: Vec<RowIssue>,
}

fn resolve_column(
    headers: &csv::StringRecord,
    field: &'static str,
    candidates: &[String],
) -> Result<usize, TraceError> {
    for cand in candidates {
        if let Some(idx) = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(cand))
        {
            return Ok(idx);
        }
    }
    Err(TraceError::MissingColumn {
        field,
        candidates: candidates.join(", "),
    })
}

fn parse_size(raw: &str, unit: SizeUnit) -> Result<Option<u64>, String> {
    let raw = raw.trim();
    if raw.is_empty() || raw == "-" {
        return Ok(None);
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| format!("invalid size `{raw}`"))?;
    if !value.is_finite() || value < 0.0 {
        return Err(format!("invalid size `{raw}`"));
    }
    let bytes = match unit {
        SizeUnit::Bytes => value,
        SizeUnit::Megabytes => value * 1e6,
    };
    Ok(Some(bytes.round() as u64))
}

fn parse_runtime(raw: &str, unit: TimeUnit) -> Result<f64, String> {
    let value: f64 = raw
        .trim()
        .parse()
        .map_err(|_| format!("invalid runtime `{}`", raw.trim()))?;
    let ms = match unit {
        TimeUnit::Milliseconds => value,
        TimeUnit::Seconds => value * 1000.0,
    };
    if !ms.is_finite() || ms <= 0.0 {
        return Err(format!("runtime must be positive, got `{}`", raw.trim()));
    }
    Ok(ms)
}

fn parse_freq_mode(raw: &str) -> Result<FreqMode, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "normal" => Ok(FreqMode::Normal),
        "reduced" => Ok(FreqMode::Reduced),
        other => Err(format!("unknown frequency mode `{other}`")),
    }
}

/// Parse a trace file into records plus metadata, collecting row-level errors
/// instead of aborting on them. Only structural problems (no header, a
/// required column missing) are hard errors.
pub fn parse_traces(
    mut reader: impl BufRead,
    schema: &ColumnMapping,
) -> Result<ParsedTraces, TraceError> {
    // Peel the leading comment block; everything after it goes to the CSV
    // reader untouched.
    let mut metadata = TraceMetadata::default();
    let mut body = String::new();
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let trimmed = line.trim_start();
        if trimmed.starts_with('#') {
            let content = trimmed.trim_start_matches('#').trim();
            if let Some((key, value)) = content.split_once('=') {
                let key = key.trim().to_ascii_lowercase();
                let value = value.trim().to_string();
                match key.as_str() {
                    "freq_old_mhz" => metadata.freq_old_mhz = value.parse().ok(),
                    "freq_new_mhz" => metadata.freq_new_mhz = value.parse().ok(),
                    _ => {
                        metadata.extra.insert(key, value);
                    }
                }
            }
        } else if trimmed.is_empty() && body.is_empty() {
            // Blank lines above the header are tolerated.
        } else {
            body.push_str(&line);
            reader.read_to_string(&mut body)?;
            break;
        }
    }
    if body.trim().is_empty() {
        return Err(TraceError::EmptyInput);
    }

    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .flexible(true)
        .from_reader(body.as_bytes());
    let headers = csv_reader.headers()?.clone();

    let col_workflow = resolve_column(&headers, "workflow", &schema.workflow)?;
    let col_task = resolve_column(&headers, "task", &schema.task)?;
    let col_node = resolve_column(&headers, "node", &schema.node)?;
    let col_runtime = resolve_column(&headers, "runtime", &schema.runtime)?;
    let col_compressed = resolve_column(
        &headers,
        "input_size_compressed",
        &schema.input_size_compressed,
    )?;
    let col_uncompressed = resolve_column(
        &headers,
        "input_size_uncompressed",
        &schema.input_size_uncompressed,
    )?;
    let col_freq_mode = resolve_column(&headers, "freq_mode", &schema.freq_mode)?;
    let col_partition = resolve_column(&headers, "partition_label", &schema.partition_label)?;

    let mut out = ParsedTraces {
        metadata,
        ..ParsedTraces::default()
    };

    for (i, row) in csv_reader.records().enumerate() {
        let row_no = i + 1;
        let reject = |out: &mut ParsedTraces, message: String| {
            out.row_errors.push(RowIssue {
                row: row_no,
                message,
            });
        };
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                reject(&mut out, e.to_string());
                continue;
            }
        };
        let field = |idx: usize| record.get(idx).unwrap_or("").trim();

        let task = field(col_task).to_string();
        let node = field(col_node).to_string();
        if task.is_empty() || node.is_empty() {
            reject(&mut out, "empty task or node field".to_string());
            continue;
        }
        let compressed = match parse_size(field(col_compressed), schema.size_unit) {
            Ok(v) => v,
            Err(e) => {
                reject(&mut out, e);
                continue;
            }
        };
        let uncompressed = match parse_size(field(col_uncompressed), schema.size_unit) {
            Ok(v) => v,
            Err(e) => {
                reject(&mut out, e);
                continue;
            }
        };
        let runtime_ms = match parse_runtime(field(col_runtime), schema.time_unit) {
            Ok(v) => v,
            Err(e) => {
                reject(&mut out, e);
                continue;
            }
        };
        let freq_mode = match parse_freq_mode(field(col_freq_mode)) {
            Ok(v) => v,
            Err(e) => {
                reject(&mut out, e);
                continue;
            }
        };

        if let (Some(c), Some(u)) = (compressed, uncompressed) {
            if c > 0 && u > 0 && u < c {
                out.warnings.push(RowIssue {
                    row: row_no,
                    message: format!(
                        "uncompressed size {u} is smaller than compressed size {c}"
                    ),
                });
            }
        }

        out.records.push(RunRecord {
            workflow: field(col_workflow).to_string(),
            task,
            node,
            input_size_compressed: compressed,
            input_size_uncompressed: uncompressed,
            runtime_ms,
            freq_mode,
            partition_label: field(col_partition).to_string(),
        });
    }
    Ok(out)
}

/// Canonical header used by [`write_traces`]; `parse_traces` with the default
/// mapping reads it back unchanged.
pub const CANONICAL_HEADER: [&str; 8] = [
    "Workflow",
    "Task",
    "Machine",
    "Realtime",
    "InputSizeCompressed",
    "InputSizeUncompressed",
    "FreqMode",
    "PartitionLabel",
];

/// Serialize records (and metadata, if any) in the canonical schema: comma
/// delimiter, bytes, milliseconds.
pub fn write_traces(
    records: &[RunRecord],
    metadata: &TraceMetadata,
    mut writer: impl Write,
) -> Result<(), TraceError> {
    if let Some(f) = metadata.freq_old_mhz {
        writeln!(writer, "# freq_old_mhz = {f}")?;
    }
    if let Some(f) = metadata.freq_new_mhz {
        writeln!(writer, "# freq_new_mhz = {f}")?;
    }
    for (key, value) in &metadata.extra {
        writeln!(writer, "# {key} = {value}")?;
    }
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record(CANONICAL_HEADER)?;
    let size_str = |v: Option<u64>| v.map(|b| b.to_string()).unwrap_or_default();
    for r in records {
        csv_writer.write_record([
            r.workflow.as_str(),
            r.task.as_str(),
            r.node.as_str(),
            &r.runtime_ms.to_string(),
            &size_str(r.input_size_compressed),
            &size_str(r.input_size_uncompressed),
            &r.freq_mode.to_string(),
            r.partition_label.as_str(),
        ])?;
    }
    csv_writer.flush()?;
    Ok(())
}

/// One matched normal/reduced execution of the same task on the same
/// partition. `time_old_ms` is the normal-speed runtime, `time_new_ms` the
/// reduced-speed one.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    pub partition_label: String,
    pub time_old_ms: f64,
    pub time_new_ms: f64,
}

/// Per-task observations from the two local workflow runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub task: String,
    /// (effective input size in bytes, runtime in ms) of normal-speed runs,
    /// in file order.
    pub normal_runs: Vec<(u64, f64)>,
    /// Same for reduced-speed runs, matched or not.
    pub reduced_runs: Vec<(u64, f64)>,
    /// Normal/reduced runs matched on partition label.
    pub pairs: Vec<PairedRun>,
}

/// Group records from one local machine into per-task training sets, matching
/// normal- and reduced-speed runs on their partition label.
///
/// Every record must carry an input size (see [`effective_input_size`]).
/// Duplicate (task, partition, mode) observations are rejected; unmatched
/// reduced runs stay in `reduced_runs` but produce no pair.
pub fn build_training_sets(
    records: &[RunRecord],
) -> Result<BTreeMap<String, TrainingSet>, TraceError> {
    let nodes: HashSet<&str> = records.iter().map(|r| r.node.as_str()).collect();
    if nodes.len() > 1 {
        let mut names: Vec<&str> = nodes.into_iter().collect();
        names.sort_unstable();
        return Err(TraceError::MixedNodes {
            nodes: names.join(", "),
        });
    }

    let mut sets: BTreeMap<String, TrainingSet> = BTreeMap::new();
    let mut seen: HashSet<(String, String, FreqMode)> = HashSet::new();
    // (task, label) -> runtime, for pair matching.
    let mut normal_by_label: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut reduced_by_label: BTreeMap<(String, String), f64> = BTreeMap::new();

    for r in records {
        let key = (r.task.clone(), r.partition_label.clone(), r.freq_mode);
        if !seen.insert(key) {
            return Err(TraceError::DuplicateRecord {
                task: r.task.clone(),
                partition: r.partition_label.clone(),
                mode: r.freq_mode,
            });
        }
        let (size, _) = effective_input_size(r)?;
        let set = sets.entry(r.task.clone()).or_insert_with(|| TrainingSet {
            task: r.task.clone(),
            ..TrainingSet::default()
        });
        let label_key = (r.task.clone(), r.partition_label.clone());
        match r.freq_mode {
            FreqMode::Normal => {
                set.normal_runs.push((size, r.runtime_ms));
                normal_by_label.insert(label_key, r.runtime_ms);
            }
            FreqMode::Reduced => {
                set.reduced_runs.push((size, r.runtime_ms));
                reduced_by_label.insert(label_key, r.runtime_ms);
            }
        }
    }

    for ((task, label), time_new) in &reduced_by_label {
        if let Some(time_old) = normal_by_label.get(&(task.clone(), label.clone())) {
            sets.get_mut(task)
                .expect("task present: reduced record created its set")
                .pairs
                .push(PairedRun {
                    partition_label: label.clone(),
                    time_old_ms: *time_old,
                    time_new_ms: *time_new,
                });
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(task: &str, label: &str, mode: FreqMode, size: u64, runtime: f64) -> RunRecord {
        RunRecord {
            workflow: "wf".into(),
            task: task.into(),
            node: "local".into(),
            input_size_compressed: None,
            input_size_uncompressed: Some(size),
            runtime_ms: runtime,
            freq_mode: mode,
            partition_label: label.into(),
        }
    }

    #[test]
    fn parses_single_valid_row() {
        let data = "Workflow,Task,Machine,Realtime,InputSizeCompressed,InputSizeUncompressed,FreqMode,PartitionLabel\n\
                    wf,fastqc,local,120000,,4808,Normal,p1\n";
        let parsed = parse_traces(data.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert!(parsed.row_errors.is_empty());
        let r = &parsed.records[0];
        assert_eq!(r.task, "fastqc");
        assert_eq!(r.input_size_uncompressed, Some(4808));
        assert_eq!(r.runtime_ms, 120000.0);
        assert_eq!(r.freq_mode, FreqMode::Normal);
    }

    #[test]
    fn non_numeric_runtime_is_a_row_error() {
        let data = "Workflow,Task,Machine,Realtime,InputSizeCompressed,InputSizeUncompressed,FreqMode,PartitionLabel\n\
                    wf,fastqc,local,abc,,4808,Normal,p1\n";
        let parsed = parse_traces(data.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(parsed.records.len(), 0);
        assert_eq!(parsed.row_errors.len(), 1);
        assert_eq!(parsed.row_errors[0].row, 1);
    }

    #[test]
    fn malformed_rows_are_skipped_and_order_preserved() {
        // 10 data rows, 2 malformed (rows 3 and 7).
        let mut data = String::from(
            "Workflow,Task,Machine,Realtime,InputSizeCompressed,InputSizeUncompressed,FreqMode,PartitionLabel\n",
        );
        for i in 1..=10 {
            if i == 3 {
                data.push_str("wf,t3,local,notanumber,,100,Normal,p3\n");
            } else if i == 7 {
                data.push_str("wf,t7,local,1000,,100,Sideways,p7\n");
            } else {
                data.push_str(&format!("wf,t{i},local,{},,100,Normal,p{i}\n", i * 1000));
            }
        }
        let parsed = parse_traces(data.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(parsed.records.len(), 8);
        assert_eq!(parsed.row_errors.len(), 2);
        assert_eq!(
            parsed.row_errors.iter().map(|e| e.row).collect::<Vec<_>>(),
            vec![3, 7]
        );
        let tasks: Vec<&str> = parsed.records.iter().map(|r| r.task.as_str()).collect();
        assert_eq!(tasks, ["t1", "t2", "t4", "t5", "t6", "t8", "t9", "t10"]);
    }

    #[test]
    fn missing_required_column_is_a_schema_error() {
        let data = "Workflow,Task,Machine,Realtime,InputSizeCompressed,InputSizeUncompressed,FreqMode\nwf,t,local,1,,1,Normal\n";
        let err = parse_traces(data.as_bytes(), &ColumnMapping::default()).unwrap_err();
        assert!(matches!(
            err,
            TraceError::MissingColumn {
                field: "partition_label",
                ..
            }
        ));
    }

    #[test]
    fn metadata_block_is_read() {
        let data = "# freq_old_mhz = 3300\n# freq_new_mhz = 2640\n# corpus = unit-test\n\
                    Workflow,Task,Machine,Realtime,InputSizeCompressed,InputSizeUncompressed,FreqMode,PartitionLabel\n\
                    wf,t,local,5,,1,Normal,p1\n";
        let parsed = parse_traces(data.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(parsed.metadata.freq_old_mhz, Some(3300.0));
        assert_eq!(parsed.metadata.freq_new_mhz, Some(2640.0));
        assert_eq!(parsed.metadata.extra["corpus"], "unit-test");
    }

    #[test]
    fn unit_hints_convert_to_internal_units() {
        let schema = ColumnMapping {
            size_unit: SizeUnit::Megabytes,
            time_unit: TimeUnit::Seconds,
            ..ColumnMapping::default()
        };
        let data = "Workflow,Task,Machine,Realtime,InputSizeCompressed,InputSizeUncompressed,FreqMode,PartitionLabel\n\
                    wf,t,local,1.5,,2014,Normal,p1\n";
        let parsed = parse_traces(data.as_bytes(), &schema).unwrap();
        let r = &parsed.records[0];
        assert_eq!(r.runtime_ms, 1500.0);
        assert_eq!(r.input_size_uncompressed, Some(2_014_000_000));
    }

    #[test]
    fn compressed_larger_than_uncompressed_is_a_warning_not_an_error() {
        let data = "Workflow,Task,Machine,Realtime,InputSizeCompressed,InputSizeUncompressed,FreqMode,PartitionLabel\n\
                    wf,t,local,5,200,100,Normal,p1\n";
        let parsed = parse_traces(data.as_bytes(), &ColumnMapping::default()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn effective_size_prefers_uncompressed() {
        // Compressed ~2014 MB alongside the (larger) logical payload: the
        // logical size wins.
        let mut r = record("t", "p1", FreqMode::Normal, 8_330_000_000, 100.0);
        r.input_size_compressed = Some(2_014_000_000);
        let (size, source) = effective_input_size(&r).unwrap();
        assert_eq!(size, 8_330_000_000);
        assert_eq!(source, SizeSource::Uncompressed);
    }

    #[test]
    fn effective_size_falls_back_to_compressed() {
        let mut r = record("t", "p1", FreqMode::Normal, 0, 100.0);
        r.input_size_uncompressed = None;
        r.input_size_compressed = Some(100);
        let (size, source) = effective_input_size(&r).unwrap();
        assert_eq!(size, 100);
        assert_eq!(source, SizeSource::CompressedFallback);

        // A stored zero counts as absent.
        let mut z = record("t", "p1", FreqMode::Normal, 0, 100.0);
        z.input_size_compressed = Some(100);
        assert_eq!(effective_input_size(&z).unwrap().0, 100);
    }

    #[test]
    fn effective_size_errors_when_both_absent() {
        let mut r = record("t", "p1", FreqMode::Normal, 0, 100.0);
        r.input_size_uncompressed = None;
        assert!(matches!(
            effective_input_size(&r),
            Err(TraceError::NoInputSize { .. })
        ));
    }

    #[test]
    fn training_sets_pair_on_partition_label() {
        let mut records = Vec::new();
        for i in 1..=5 {
            records.push(record("t", &format!("p{i}"), FreqMode::Normal, i * 100, 100.0 * i as f64));
        }
        for i in 1..=5 {
            records.push(record("t", &format!("p{i}"), FreqMode::Reduced, i * 100, 125.0 * i as f64));
        }
        let sets = build_training_sets(&records).unwrap();
        let ts = &sets["t"];
        assert_eq!(ts.pairs.len(), 5);
        assert_eq!(ts.normal_runs.len(), 5);
        assert_eq!(ts.reduced_runs.len(), 5);
    }

    #[test]
    fn only_a_few_reduced_runs_still_pair() {
        let mut records = Vec::new();
        for i in 1..=5 {
            records.push(record("t", &format!("p{i}"), FreqMode::Normal, i * 100, 100.0));
        }
        records.push(record("t", "p1", FreqMode::Reduced, 100, 125.0));
        records.push(record("t", "p2", FreqMode::Reduced, 200, 125.0));
        let sets = build_training_sets(&records).unwrap();
        let ts = &sets["t"];
        assert_eq!(ts.pairs.len(), 2);
        assert_eq!(ts.normal_runs.len(), 5);
    }

    #[test]
    fn zero_reduced_runs_means_zero_pairs() {
        let records = vec![
            record("t", "p1", FreqMode::Normal, 100, 100.0),
            record("t", "p2", FreqMode::Normal, 200, 180.0),
        ];
        let sets = build_training_sets(&records).unwrap();
        assert!(sets["t"].pairs.is_empty());
        assert_eq!(sets["t"].normal_runs.len(), 2);
    }

    #[test]
    fn duplicate_records_are_rejected_by_name() {
        let records = vec![
            record("t", "p1", FreqMode::Normal, 100, 100.0),
            record("t", "p1", FreqMode::Normal, 100, 101.0),
        ];
        let err = build_training_sets(&records).unwrap_err();
        match err {
            TraceError::DuplicateRecord { task, partition, mode } => {
                assert_eq!(task, "t");
                assert_eq!(partition, "p1");
                assert_eq!(mode, FreqMode::Normal);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn mixed_nodes_are_rejected() {
        let mut a = record("t", "p1", FreqMode::Normal, 100, 100.0);
        let mut b = record("t", "p2", FreqMode::Normal, 200, 200.0);
        a.node = "n1".into();
        b.node = "n2".into();
        let err = build_training_sets(&[a, b]).unwrap_err();
        assert!(matches!(err, TraceError::MixedNodes { .. }));
    }

    #[test]
    fn normal_records_are_never_dropped() {
        let mut records = Vec::new();
        for t in ["a", "b"] {
            for i in 1..=4 {
                records.push(record(t, &format!("p{i}"), FreqMode::Normal, i * 10, 50.0));
            }
        }
        records.push(record("a", "p1", FreqMode::Reduced, 10, 60.0));
        let normal_count = records
            .iter()
            .filter(|r| r.freq_mode == FreqMode::Normal)
            .count();
        let sets = build_training_sets(&records).unwrap();
        let total: usize = sets.values().map(|s| s.normal_runs.len()).sum();
        assert_eq!(total, normal_count);
    }

    #[test]
    fn roundtrip_write_then_parse() {
        let records = vec![
            record("wf", "p1", FreqMode::Normal, 4808, 120000.0),
            {
                let mut r = record("wf2", "p2", FreqMode::Reduced, 0, 1.5);
                r.input_size_uncompressed = None;
                r.input_size_compressed = Some(77);
                r
            },
        ];
        let metadata = TraceMetadata {
            freq_old_mhz: Some(3300.0),
            freq_new_mhz: Some(2640.0),
            extra: BTreeMap::new(),
        };
        let mut buf = Vec::new();
        write_traces(&records, &metadata, &mut buf).unwrap();
        let parsed = parse_traces(buf.as_slice(), &ColumnMapping::default()).unwrap();
        assert_eq!(parsed.records, records);
        assert_eq!(parsed.metadata.freq_old_mhz, Some(3300.0));
    }
}
