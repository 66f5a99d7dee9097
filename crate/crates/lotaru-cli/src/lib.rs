//! Command-line front end for the runtime estimator: profile machines, plan
//! and split downsampled inputs, train per-task models from local runs,
//! predict runtimes for every profiled node, and score estimators against
//! observed traces.
//!
//! Exit codes: 0 on success, 2 for usage and validation problems, 1 when a
//! pipeline module fails (the message names the module). Diagnostics go to
//! standard error; data goes to files or standard output.

mod args;
mod commands;

use std::ffi::OsString;
use std::sync::Once;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, Settings};

/// A command failure, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unusable values, missing inputs — exit 2.
    Usage(String),
    /// A pipeline module rejected the data or an operation failed — exit 1.
    Module {
        module: &'static str,
        message: String,
    },
}

fn module_error(module: &'static str, error: impl std::fmt::Display) -> CliError {
    CliError::Module {
        module,
        message: error.to_string(),
    }
}

impl From<lotaru::trace::TraceError> for CliError {
    fn from(e: lotaru::trace::TraceError) -> CliError {
        module_error("trace", e)
    }
}

impl From<lotaru::profile::ProfileError> for CliError {
    fn from(e: lotaru::profile::ProfileError) -> CliError {
        module_error("profile", e)
    }
}

impl From<lotaru::sampling::SamplingError> for CliError {
    fn from(e: lotaru::sampling::SamplingError) -> CliError {
        module_error("sampling", e)
    }
}

impl From<lotaru::estimator::EstimatorError> for CliError {
    fn from(e: lotaru::estimator::EstimatorError) -> CliError {
        module_error("estimator", e)
    }
}

impl From<lotaru::adjustment::AdjustmentError> for CliError {
    fn from(e: lotaru::adjustment::AdjustmentError) -> CliError {
        module_error("adjustment", e)
    }
}

impl From<lotaru::evaluation::EvaluationError> for CliError {
    fn from(e: lotaru::evaluation::EvaluationError) -> CliError {
        use lotaru::evaluation::EvaluationError as E;
        let module = match &e {
            E::Trace(_) => "trace",
            E::Estimator(_) => "estimator",
            E::Adjustment(_) => "adjustment",
            E::Baseline(_) => "baselines",
            E::Io(_) => "io",
            E::NonPositiveActual(_) | E::Empty | E::NoTrainingData(_) => "evaluation",
        };
        module_error(module, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        module_error("io", e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> CliError {
        module_error("io", e)
    }
}

/// Parse `args` (including the program name) and run the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            // clap routes help to stdout and errors to stderr.
            let _ = e.print();
            return code;
        }
    };

    init_thread_pool();

    let settings = match Settings::load(cli.config.as_deref()) {
        Ok(settings) => settings,
        Err(e) => return report(e),
    };
    let result = match cli.command {
        Command::Bench(a) => commands::bench(a, &settings),
        Command::PlanSamples(a) => commands::plan_samples(a, &settings),
        Command::Split(a) => commands::split(a, &settings),
        Command::Train(a) => commands::train(a, &settings),
        Command::Predict(a) => commands::predict(a, &settings),
        Command::Evaluate(a) => commands::evaluate(a, &settings),
    };
    match result {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    match e {
        CliError::Usage(message) => {
            eprintln!("error: {message}");
            2
        }
        CliError::Module { module, message } => {
            eprintln!("error[{module}]: {message}");
            1
        }
    }
}

/// Cap the worker pool at LOTARU_THREADS. The global pool can only be built
/// once per process, so later calls (repeated `run`s in one process) keep
/// the first configuration.
fn init_thread_pool() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        let Ok(raw) = std::env::var("LOTARU_THREADS") else {
            return;
        };
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring LOTARU_THREADS={raw} (need a positive integer)"),
        }
    });
}
