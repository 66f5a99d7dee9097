//! Lotaru estimates scientific-workflow task runtimes for every task–node
//! pair of a heterogeneous cluster, using only microbenchmark profiles of the
//! nodes and traces from two small local workflow runs (one at normal CPU
//! speed, one at reduced speed).
//!
//! The pipeline:
//!
//! 1. [`profile`] — benchmark every node (single-threaded CPU, FLOPS, memory,
//!    sequential I/O) or parse externally collected scores.
//! 2. [`sampling`] — plan downsampled input partitions (halving ladder) and
//!    split record-oriented input files (FASTQ) accordingly.
//! 3. [`trace`] — parse the task-execution traces of the two local runs into
//!    per-task training sets.
//! 4. [`estimator`] — per task, gate on Pearson correlation and fit either a
//!    Bayesian linear regression (runtime vs. uncompressed input size, with
//!    credible intervals) or a median fallback.
//! 5. [`adjustment`] — derive a per-task CPU weight from the normal/reduced
//!    runtime deviations and scale local predictions to each target node.
//! 6. [`baselines`] — reference estimators (naive ratio, online-m, online-p)
//!    for comparison.
//! 7. [`evaluation`] — per-task prediction errors, median prediction error
//!    (MPE), percentile summaries, error CDFs, and CSV/SVG reports.

pub mod adjustment;
pub mod baselines;
pub mod estimator;
pub mod evaluation;
pub mod profile;
pub mod report;
pub mod sampling;
pub mod trace;

mod util;
