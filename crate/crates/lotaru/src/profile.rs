//! Node profiling: built-in single-threaded microbenchmarks and profile
//! file parsing.
//!
//! Every benchmark runs on exactly one thread so that the score reflects
//! per-core capability; aggregating over cores would let machines with many
//! weak cores outscore machines that actually run a single task faster. The
//! absolute numbers are not meant to match sysbench/fio/LINPACK — only the
//! ratios between nodes matter downstream.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::hint::black_box;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("invalid benchmark argument: {0}")]
    InvalidArgument(String),
    #[error("another benchmark is already running in this process")]
    Busy,
    #[error("profile is missing mandatory field `{0}`")]
    MissingField(&'static str),
    #[error("profile field `{field}` has invalid value `{value}`")]
    InvalidValue { field: String, value: String },
    #[error("malformed profile: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-node microbenchmark scores.
///
/// `cpu_events_per_sec`, `read_iops`, and `write_iops` are mandatory — the
/// node adjustment factor is built from them. `flops` and `mem_score` are
/// diagnostics only: the FLOPS benchmark does not run on every platform, and
/// memory speed is deliberately excluded from the adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfile {
    pub node: String,
    /// Prime-verification passes per second (single core).
    pub cpu_events_per_sec: f64,
    /// Dense-solve floating-point operations per second, if measured.
    pub flops: Option<f64>,
    /// Memory write+read throughput in MB/s, if measured.
    pub mem_score: Option<f64>,
    /// Sequential read blocks per second.
    pub read_iops: f64,
    /// Sequential write blocks per second.
    pub write_iops: f64,
}

impl NodeProfile {
    fn validate(&self) -> Result<(), ProfileError> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ProfileError::InvalidValue {
                    field: field.to_string(),
                    value: v.to_string(),
                })
            }
        };
        if self.node.is_empty() {
            return Err(ProfileError::MissingField("node"));
        }
        positive("cpu_events_per_sec", self.cpu_events_per_sec)?;
        positive("read_iops", self.read_iops)?;
        positive("write_iops", self.write_iops)?;
        if let Some(f) = self.flops {
            positive("flops", f)?;
        }
        if let Some(m) = self.mem_score {
            positive("mem_score", m)?;
        }
        Ok(())
    }
}

// Benchmark execution is exclusive within one process: concurrent benchmarks
// would contend for the resource being measured.
static BENCH_TOKEN: AtomicBool = AtomicBool::new(false);

struct BenchGuard;

impl BenchGuard {
    fn acquire() -> Result<BenchGuard, ProfileError> {
        if BENCH_TOKEN
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .is_ok()
        {
            Ok(BenchGuard)
        } else {
            Err(ProfileError::Busy)
        }
    }
}

impl Drop for BenchGuard {
    fn drop(&mut self) {
        BENCH_TOKEN.store(false, Ordering::Release);
    }
}

fn is_prime(n: u64) -> bool {
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    n >= 2
}

/// CPU score: full prime-verification passes per second.
///
/// One event is a complete trial-division pass over `3..=max_prime`. The pass
/// is repeated until `limit` wall time has elapsed (at least one pass always
/// runs); the score is completed passes divided by elapsed time.
pub fn bench_cpu_prime(limit: Duration, max_prime: u64) -> Result<f64, ProfileError> {
    if limit.is_zero() {
        return Err(ProfileError::InvalidArgument(
            "benchmark duration must be positive".into(),
        ));
    }
    if max_prime < 3 {
        return Err(ProfileError::InvalidArgument(format!(
            "max_prime must be at least 3, got {max_prime}"
        )));
    }
    let _guard = BenchGuard::acquire()?;
    let start = Instant::now();
    let mut passes: u64 = 0;
    let mut found: u64 = 0;
    loop {
        for n in 3..=max_prime {
            if is_prime(n) {
                found += 1;
            }
        }
        passes += 1;
        if start.elapsed() >= limit {
            break;
        }
    }
    black_box(found);
    Ok(passes as f64 / start.elapsed().as_secs_f64())
}

/// Floating-point operation count of one `n`-dimensional Gaussian-elimination
/// solve: 2/3·n³ + 2·n².
pub fn gaussian_elimination_work(n: usize) -> f64 {
    let n = n as f64;
    2.0 / 3.0 * n * n * n + 2.0 * n * n
}

fn solve_dense(a: &mut [f64], b: &mut [f64], x: &mut [f64], n: usize) {
    for k in 0..n {
        let mut piv = k;
        for i in (k + 1)..n {
            if a[i * n + k].abs() > a[piv * n + k].abs() {
                piv = i;
            }
        }
        if piv != k {
            for j in 0..n {
                a.swap(k * n + j, piv * n + j);
            }
            b.swap(k, piv);
        }
        let akk = a[k * n + k];
        for i in (k + 1)..n {
            let factor = a[i * n + k] / akk;
            for j in k..n {
                a[i * n + j] -= factor * a[k * n + j];
            }
            b[i] -= factor * b[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in (k + 1)..n {
            s -= a[k * n + j] * x[j];
        }
        x[k] = s / a[k * n + k];
    }
}

/// FLOPS score via a repeated dense linear solve of dimension `n`, run for at
/// least `min_duration`; the reported rate uses the best (fastest) observed
/// solve so background noise only ever lowers intermediate samples.
pub fn bench_flops_for(n: usize, min_duration: Duration) -> Result<f64, ProfileError> {
    if n < 2 {
        return Err(ProfileError::InvalidArgument(format!(
            "matrix dimension must be at least 2, got {n}"
        )));
    }
    let _guard = BenchGuard::acquire()?;

    // Deterministic well-conditioned system: pseudo-random entries with a
    // dominant diagonal.
    let mut seed: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = move || {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (seed >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut a0 = vec![0.0f64; n * n];
    let mut b0 = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..n {
            a0[i * n + j] = next() + if i == j { n as f64 } else { 0.0 };
        }
        b0[i] = next();
    }

    let mut a = vec![0.0f64; n * n];
    let mut b = vec![0.0f64; n];
    let mut x = vec![0.0f64; n];
    let started = Instant::now();
    let mut best = Duration::MAX;
    loop {
        a.copy_from_slice(&a0);
        b.copy_from_slice(&b0);
        let t0 = Instant::now();
        solve_dense(&mut a, &mut b, &mut x, n);
        let dt = t0.elapsed();
        black_box(&x);
        if dt < best {
            best = dt;
        }
        if started.elapsed() >= min_duration {
            break;
        }
    }
    let secs = best.as_secs_f64().max(1e-9);
    Ok(gaussian_elimination_work(n) / secs)
}

/// FLOPS score with the default one-second measurement window.
pub fn bench_flops(n: usize) -> Result<f64, ProfileError> {
    bench_flops_for(n, Duration::from_secs(1))
}

/// Memory score: sequential write-then-read throughput over a reused buffer
/// of `block` bytes until `total` bytes have been written and `total` bytes
/// read back; the score counts both directions (2·total bytes) in MB/s
/// (1 MB = 10^6 bytes).
pub fn bench_memory(block: usize, total: u64) -> Result<f64, ProfileError> {
    if block < 4096 {
        return Err(ProfileError::InvalidArgument(format!(
            "memory block must be at least 4096 bytes, got {block}"
        )));
    }
    if total < block as u64 || !total.is_multiple_of(block as u64) {
        return Err(ProfileError::InvalidArgument(format!(
            "total size {total} must be a positive multiple of the block size {block}"
        )));
    }
    let _guard = BenchGuard::acquire()?;
    let passes = total / block as u64;
    let mut buf = vec![0u8; block];
    let start = Instant::now();
    for pass in 0..passes {
        buf.fill(pass as u8);
        black_box(&buf);
    }
    let mut checksum: u64 = 0;
    for _ in 0..passes {
        for chunk in buf.chunks_exact(8) {
            checksum = checksum.wrapping_add(u64::from_ne_bytes(chunk.try_into().unwrap()));
        }
        black_box(checksum);
    }
    let elapsed = start.elapsed().as_secs_f64().max(1e-9);
    Ok((2 * total) as f64 / 1e6 / elapsed)
}

// Deletes the benchmark file on every exit path.
struct TempFileGuard(PathBuf);

impl Drop for TempFileGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[cfg(target_os = "linux")]
fn drop_cache_hint(file: &File) {
    use std::os::unix::io::AsRawFd;
    // Best effort: ask the kernel to evict the file's pages so the read phase
    // touches the device rather than the page cache.
    unsafe {
        libc::posix_fadvise(file.as_raw_fd(), 0, 0, libc::POSIX_FADV_DONTNEED);
    }
}

#[cfg(not(target_os = "linux"))]
fn drop_cache_hint(_file: &File) {
    // No portable page-cache eviction; the read phase may be partly served
    // from cache. Only cross-node ratios are consumed downstream, and all
    // nodes are measured the same way.
}

/// Sequential I/O score: `(read_iops, write_iops)` — blocks per second for a
/// sequential write (with `sync_all`) and a sequential read of a fresh file
/// of `file_size` bytes under `dir`, in `block`-byte operations.
///
/// Cache handling is best effort: the file is written, synced, its pages are
/// dropped where the platform supports it, then read back. The temp file is
/// removed on every path, including errors.
pub fn bench_io_sequential(
    file_size: u64,
    block: usize,
    dir: &Path,
) -> Result<(f64, f64), ProfileError> {
    if file_size == 0 {
        return Err(ProfileError::InvalidArgument(
            "benchmark file size must be positive".into(),
        ));
    }
    if block == 0 || block as u64 > file_size {
        return Err(ProfileError::InvalidArgument(format!(
            "block size {block} must be positive and no larger than the file size {file_size}"
        )));
    }
    let _guard = BenchGuard::acquire()?;
    let n_blocks = file_size.div_ceil(block as u64);
    let path = dir.join(format!(
        "lotaru-io-bench-{}-{}.tmp",
        std::process::id(),
        Instant::now().elapsed().as_nanos()
    ));
    let _cleanup = TempFileGuard(path.clone());

    let mut pattern = vec![0u8; block];
    for (i, byte) in pattern.iter_mut().enumerate() {
        *byte = (i % 251) as u8;
    }

    let write_start = Instant::now();
    let mut file = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)?;
    for _ in 0..n_blocks {
        file.write_all(&pattern)?;
    }
    file.sync_all()?;
    let write_elapsed = write_start.elapsed().as_secs_f64().max(1e-9);

    drop_cache_hint(&file);
    drop(file);

    let mut file = File::open(&path)?;
    let mut buf = vec![0u8; block];
    let read_start = Instant::now();
    let mut checksum: u64 = 0;
    for _ in 0..n_blocks {
        file.read_exact(&mut buf)?;
        checksum = checksum.wrapping_add(buf[0] as u64);
    }
    black_box(checksum);
    let read_elapsed = read_start.elapsed().as_secs_f64().max(1e-9);

    Ok((
        n_blocks as f64 / read_elapsed,
        n_blocks as f64 / write_elapsed,
    ))
}

fn parse_numeric(field: &'static str, raw: &str) -> Result<f64, ProfileError> {
    let cleaned: String = raw.chars().filter(|c| *c != ',' && *c != '_').collect();
    cleaned
        .trim()
        .parse()
        .map_err(|_| ProfileError::InvalidValue {
            field: field.to_string(),
            value: raw.to_string(),
        })
}

const PROFILE_FIELDS: [&str; 6] = [
    "node",
    "cpu_events_per_sec",
    "flops",
    "mem_score",
    "read_iops",
    "write_iops",
];

fn profile_from_map(map: &BTreeMap<String, String>) -> Result<NodeProfile, ProfileError> {
    let get = |key: &'static str| map.get(key).map(|s| s.trim()).filter(|s| !s.is_empty());
    let mandatory_num = |key: &'static str| -> Result<f64, ProfileError> {
        parse_numeric(key, get(key).ok_or(ProfileError::MissingField(key))?)
    };
    let optional_num = |key: &'static str| -> Result<Option<f64>, ProfileError> {
        get(key).map(|raw| parse_numeric(key, raw)).transpose()
    };
    let profile = NodeProfile {
        node: get("node")
            .ok_or(ProfileError::MissingField("node"))?
            .to_string(),
        cpu_events_per_sec: mandatory_num("cpu_events_per_sec")?,
        flops: optional_num("flops")?,
        mem_score: optional_num("mem_score")?,
        read_iops: mandatory_num("read_iops")?,
        write_iops: mandatory_num("write_iops")?,
    };
    profile.validate()?;
    Ok(profile)
}

/// Parse one or more node profiles from either format the `bench` subcommand
/// writes: flat `key = value` lines (one profile per document) or CSV with a
/// header naming the same fields (one profile per row). `#` lines and blank
/// lines are ignored.
pub fn parse_profiles(content: &str) -> Result<Vec<NodeProfile>, ProfileError> {
    let body: Vec<&str> = content
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect();
    if body.is_empty() {
        return Err(ProfileError::Malformed("empty profile document".into()));
    }

    if body[0].contains('=') {
        let mut map = BTreeMap::new();
        for line in &body {
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ProfileError::Malformed(format!("expected `key = value`, got `{line}`"))
            })?;
            map.insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
        }
        return Ok(vec![profile_from_map(&map)?]);
    }

    // CSV: a quoted field may contain the delimiter (e.g. "3,959,800").
    let csv_body = body.join("\n");
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(csv_body.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ProfileError::Malformed(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let mut profiles = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| ProfileError::Malformed(e.to_string()))?;
        let mut map = BTreeMap::new();
        for (i, header) in headers.iter().enumerate() {
            if PROFILE_FIELDS.contains(&header.as_str()) {
                map.insert(header.clone(), row.get(i).unwrap_or("").to_string());
            }
        }
        profiles.push(profile_from_map(&map)?);
    }
    if profiles.is_empty() {
        return Err(ProfileError::Malformed(
            "profile CSV has a header but no rows".into(),
        ));
    }
    Ok(profiles)
}

/// Parse exactly one profile (either format).
pub fn parse_profile(content: &str) -> Result<NodeProfile, ProfileError> {
    let mut profiles = parse_profiles(content)?;
    if profiles.len() != 1 {
        return Err(ProfileError::Malformed(format!(
            "expected exactly one profile, found {}",
            profiles.len()
        )));
    }
    Ok(profiles.pop().expect("length checked"))
}

/// Serialize a profile as `key = value` lines; `parse_profile` reads the
/// result back losslessly.
pub fn write_profile(profile: &NodeProfile) -> String {
    let mut out = String::new();
    out.push_str(&format!("node = {}\n", profile.node));
    out.push_str(&format!(
        "cpu_events_per_sec = {}\n",
        profile.cpu_events_per_sec
    ));
    if let Some(f) = profile.flops {
        out.push_str(&format!("flops = {f}\n"));
    }
    if let Some(m) = profile.mem_score {
        out.push_str(&format!("mem_score = {m}\n"));
    }
    out.push_str(&format!("read_iops = {}\n", profile.read_iops));
    out.push_str(&format!("write_iops = {}\n", profile.write_iops));
    out
}
