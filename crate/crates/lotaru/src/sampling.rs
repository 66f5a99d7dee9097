//! Downsampling support: halving-ladder partition plans, subset enumeration
//! for training-set studies, coverage bookkeeping, and record-based input
//! splitting (FASTQ and generic line blocks).

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("partition count must be at least 1")]
    ZeroPartitions,
    #[error("cannot split {x} into {n} non-empty halving partitions")]
    InputTooSmall { x: u64, n: usize },
    #[error("subset parameters must satisfy 1 <= k_min <= n <= 63, got n={n}, k_min={k_min}")]
    InvalidCombination { n: u32, k_min: u32 },
    #[error("original size must be positive")]
    ZeroOriginalSize,
    #[error("malformed record {index}: {reason}")]
    MalformedRecord { index: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sizes of the downsampled partitions of one input of size `original_size`.
///
/// The ladder halves at every step: the first partition is half the input
/// (taking the odd remainder), each later one half its predecessor, with a
/// floor of one unit so every partition is non-empty. The sizes never sum to
/// more than the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub original_size: u64,
    pub sizes: Vec<u64>,
    pub labels: Vec<String>,
}

/// Plan `n` halving partitions of an input of size `x`, labeled `p1..pn`.
/// Errors when `x` cannot host `n` non-empty halvings.
pub fn plan_partitions(x: u64, n: usize) -> Result<PartitionPlan, SamplingError> {
    if n == 0 {
        return Err(SamplingError::ZeroPartitions);
    }
    let mut sizes = Vec::with_capacity(n);
    let mut current = x - x / 2; // ceil(x/2): integer-halving remainder goes to s_1
    for _ in 0..n {
        sizes.push(current.max(1));
        current = sizes.last().unwrap() / 2;
    }
    if sizes.iter().sum::<u64>() > x {
        return Err(SamplingError::InputTooSmall { x, n });
    }
    let labels = (1..=n).map(|k| format!("p{k}")).collect();
    Ok(PartitionPlan {
        original_size: x,
        sizes,
        labels,
    })
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 1..=k {
        result = result * (n - k + i) as u128 / i as u128;
    }
    result as u64
}

/// Iterator over all subsets of `{1..n}` with at least `k_min` members,
/// each yielded exactly once (ascending bitmask order).
#[derive(Debug, Clone)]
pub struct Combinations {
    n: u32,
    k_min: u32,
    next_mask: u64,
    end: u64,
}

impl Combinations {
    /// Number of subsets the iterator yields, computed from binomial
    /// coefficients without enumeration.
    pub fn total(&self) -> u64 {
        (self.k_min..=self.n)
            .map(|k| binomial(self.n as u64, k as u64))
            .sum()
    }
}

impl Iterator for Combinations {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        while self.next_mask < self.end {
            let mask = self.next_mask;
            self.next_mask += 1;
            if mask.count_ones() >= self.k_min {
                return Some(
                    (0..self.n)
                        .filter(|i| mask & (1u64 << i) != 0)
                        .map(|i| i + 1)
                        .collect(),
                );
            }
        }
        None
    }
}

/// Enumerate the partition subsets used when studying how training-set choice
/// affects prediction quality (all subsets of size at least `k_min`).
pub fn enumerate_combinations(n: u32, k_min: u32) -> Result<Combinations, SamplingError> {
    if k_min < 1 || k_min > n || n > 63 {
        return Err(SamplingError::InvalidCombination { n, k_min });
    }
    Ok(Combinations {
        n,
        k_min,
        next_mask: 1,
        end: 1u64 << n,
    })
}

/// Training sets whose cumulative size falls below this fraction of the
/// original input are known to predict with high variance.
pub const LOW_COVERAGE_THRESHOLD: f64 = 0.10;

/// How much of the original input a subset of partitions covers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub fraction: f64,
    /// True when the fraction is below [`LOW_COVERAGE_THRESHOLD`].
    pub below_threshold: bool,
}

/// Cumulative size of `subset_sizes` as a fraction of the original size `x`.
pub fn coverage_fraction(subset_sizes: &[u64], x: u64) -> Result<Coverage, SamplingError> {
    if x == 0 {
        return Err(SamplingError::ZeroOriginalSize);
    }
    let sum: u64 = subset_sizes.iter().sum();
    let fraction = sum as f64 / x as f64;
    Ok(Coverage {
        fraction,
        below_threshold: fraction < LOW_COVERAGE_THRESHOLD,
    })
}

/// Read a FASTQ stream into whole records (four lines each, stored verbatim
/// with trailing newlines). Validates the `@`/`+` markers and rejects a
/// truncated trailing record; `index` in errors is 1-based.
pub fn read_fastq_records(reader: impl BufRead) -> Result<Vec<String>, SamplingError> {
    let mut records = Vec::new();
    let mut current: Vec<String> = Vec::with_capacity(4);
    for line in reader.lines() {
        current.push(line?);
        if current.len() == 4 {
            let index = records.len() as u64 + 1;
            if !current[0].starts_with('@') {
                return Err(SamplingError::MalformedRecord {
                    index,
                    reason: format!("header line must start with '@', got `{}`", current[0]),
                });
            }
            if !current[2].starts_with('+') {
                return Err(SamplingError::MalformedRecord {
                    index,
                    reason: format!("separator line must start with '+', got `{}`", current[2]),
                });
            }
            let mut record = current.join("\n");
            record.push('\n');
            records.push(record);
            current.clear();
        }
    }
    if !current.is_empty() {
        return Err(SamplingError::MalformedRecord {
            index: records.len() as u64 + 1,
            reason: format!("truncated record: {} of 4 lines", current.len()),
        });
    }
    Ok(records)
}

/// Per-partition record counts: proportional to the plan sizes (rounded to
/// the nearest record), capped so the running total never exceeds
/// `total_records`. Any leftover records are simply not assigned.
pub fn partition_counts(total_records: u64, plan: &PartitionPlan) -> Vec<u64> {
    let mut remaining = total_records;
    plan.sizes
        .iter()
        .map(|&s| {
            let ideal =
                (total_records as f64 * s as f64 / plan.original_size as f64).round() as u64;
            let take = ideal.min(remaining);
            remaining -= take;
            take
        })
        .collect()
}

fn write_partition_files(
    records: &[String],
    plan: &PartitionPlan,
    out_dir: &Path,
    stem: &str,
    extension: &str,
) -> Result<Vec<PathBuf>, SamplingError> {
    let counts = partition_counts(records.len() as u64, plan);
    let mut paths = Vec::with_capacity(counts.len());
    let mut offset = 0usize;
    for (label, count) in plan.labels.iter().zip(&counts) {
        let path = out_dir.join(format!("{stem}.{label}.{extension}"));
        let mut writer = BufWriter::new(File::create(&path)?);
        for record in &records[offset..offset + *count as usize] {
            writer.write_all(record.as_bytes())?;
        }
        writer.flush()?;
        offset += *count as usize;
        paths.push(path);
    }
    Ok(paths)
}

/// Split a FASTQ stream into one file per plan partition (named
/// `{stem}.{label}.fastq` under `out_dir`). Partitions are disjoint
/// contiguous runs of whole records; counts follow [`partition_counts`].
///
/// Records are buffered in memory, which is fine at the file sizes the
/// downsampling step works with (the partitions exist precisely to be small).
pub fn split_fastq(
    reader: impl BufRead,
    plan: &PartitionPlan,
    out_dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, SamplingError> {
    let records = read_fastq_records(reader)?;
    write_partition_files(&records, plan, out_dir, stem, "fastq")
}

/// Generic variant of [`split_fastq`] for any format whose records are fixed
/// blocks of `lines_per_block` lines; no marker validation beyond the block
/// boundary check.
pub fn split_line_blocks(
    reader: impl BufRead,
    lines_per_block: usize,
    plan: &PartitionPlan,
    out_dir: &Path,
    stem: &str,
    extension: &str,
) -> Result<Vec<PathBuf>, SamplingError> {
    if lines_per_block == 0 {
        return Err(SamplingError::ZeroPartitions);
    }
    let mut records = Vec::new();
    let mut current: Vec<String> = Vec::with_capacity(lines_per_block);
    for line in reader.lines() {
        current.push(line?);
        if current.len() == lines_per_block {
            let mut record = current.join("\n");
            record.push('\n');
            records.push(record);
            current.clear();
        }
    }
    if !current.is_empty() {
        return Err(SamplingError::MalformedRecord {
            index: records.len() as u64 + 1,
            reason: format!(
                "truncated block: {} of {lines_per_block} lines",
                current.len()
            ),
        });
    }
    write_partition_files(&records, plan, out_dir, stem, extension)
}
