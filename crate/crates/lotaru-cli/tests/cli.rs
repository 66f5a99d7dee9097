//! Exit-code and contract tests for the command-line surface: usage errors
//! exit 2, module failures exit 1 with a message naming the module, inputs
//! are never mutated, and configuration follows flag > config file > default.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lotaru"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn CLI binary")
}

fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

fn to_str(path: &Path) -> &str {
    path.to_str().expect("UTF-8 path")
}

/// Weight column of the single-task weights.csv written by `train`.
fn trained_weight(models: &Path) -> String {
    let text = fs::read_to_string(models.join("weights.csv")).unwrap();
    let row = text.lines().nth(1).expect("one weight row");
    row.split(',').nth(2).expect("w column").to_string()
}

/// Two-frequency single-task trace with no metadata lines, so the
/// frequencies must come from flags or the config file.
const BARE_TRACES: &str = "\
Workflow,Task,Machine,Realtime,InputSizeCompressed,InputSizeUncompressed,FreqMode,PartitionLabel
demo,align,local,100000,500,1000,Normal,p1
demo,align,local,100000,1000,2000,Normal,p2
demo,align,local,180000,500,1000,Reduced,p1
demo,align,local,180000,1000,2000,Reduced,p2
";

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["predict", "--help"]).status.code(), Some(0));
}

#[test]
fn predict_without_profiles_is_a_usage_error() {
    let out = run(&["predict", "--models", "models"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--profiles"), "stderr: {}", stderr_of(&out));
}

#[test]
fn unknown_flags_and_subcommands_are_usage_errors() {
    assert_eq!(run(&["train", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["transmogrify"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn missing_input_paths_are_usage_errors() {
    let out = run(&["train", "--traces", "no-such-file.csv", "--out", "models"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("no-such-file.csv"));

    let out = run(&[
        "split",
        "--input",
        "no-such-file.fastq",
        "--partitions",
        "2",
        "--out-dir",
        "parts",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_traces_are_a_module_error() {
    let tmp = tempfile::tempdir().unwrap();
    let traces = tmp.path().join("traces.csv");
    fs::write(&traces, "Workflow,Task,Realtime\nw,t,100\n").unwrap();
    let out = run(&[
        "train",
        "--traces",
        to_str(&traces),
        "--out",
        to_str(&tmp.path().join("models")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = stderr_of(&out);
    assert!(stderr.contains("error[trace]"), "stderr: {stderr}");
}

#[test]
fn inverted_frequencies_are_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--traces",
        to_str(&fixture("reference_cluster/traces.csv")),
        "--out",
        to_str(&tmp.path().join("models")),
        "--freq-old",
        "1000",
        "--freq-new",
        "2000",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
}

#[test]
fn reduced_runs_demand_frequencies_from_somewhere() {
    let tmp = tempfile::tempdir().unwrap();
    let traces = tmp.path().join("bare.csv");
    fs::write(&traces, BARE_TRACES).unwrap();

    // No metadata, no flags, no config: the weight cannot be computed.
    let out = run(&[
        "train",
        "--traces",
        to_str(&traces),
        "--out",
        to_str(&tmp.path().join("models")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = stderr_of(&out);
    assert!(stderr.contains("freq"), "stderr must point at the frequencies: {stderr}");
}

#[test]
fn config_supplies_frequencies_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let traces = tmp.path().join("bare.csv");
    fs::write(&traces, BARE_TRACES).unwrap();
    let config = tmp.path().join("lotaru.conf");
    fs::write(&config, "freq-old = 1500\nfreq_new = 1000\n").unwrap();

    // Ratio 1.5 clamps the weight to 1.
    let from_config = tmp.path().join("from-config");
    let out = run(&[
        "train",
        "--traces",
        to_str(&traces),
        "--out",
        to_str(&from_config),
        "--config",
        to_str(&config),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_eq!(trained_weight(&from_config), "1");

    // The flag beats the config key; ratio 2 recovers w = 0.8.
    let from_flag = tmp.path().join("from-flag");
    let out = run(&[
        "train",
        "--traces",
        to_str(&traces),
        "--out",
        to_str(&from_flag),
        "--config",
        to_str(&config),
        "--freq-old",
        "2000",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert_eq!(trained_weight(&from_flag), "0.8");
}

#[test]
fn no_subcommand_mutates_its_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let traces = tmp.path().join("traces.csv");
    fs::copy(fixture("reference_cluster/traces.csv"), &traces).unwrap();
    let profiles = tmp.path().join("profiles");
    fs::create_dir_all(&profiles).unwrap();
    for name in ["local.profile", "n1.profile", "n2.profile"] {
        fs::copy(fixture("reference_cluster/profiles").join(name), profiles.join(name)).unwrap();
    }
    let before_traces = fs::read(&traces).unwrap();
    let before_profile = fs::read(profiles.join("n1.profile")).unwrap();

    let models = tmp.path().join("models");
    let out = run(&[
        "train",
        "--traces",
        to_str(&traces),
        "--out",
        to_str(&models),
        "--local",
        "local",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let out = run(&[
        "predict",
        "--models",
        to_str(&models),
        "--profiles",
        to_str(&profiles),
        "--local",
        "local",
        "--query",
        "align=1500",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    assert_eq!(fs::read(&traces).unwrap(), before_traces);
    assert_eq!(fs::read(profiles.join("n1.profile")).unwrap(), before_profile);
}

#[test]
fn plan_samples_prints_the_halving_ladder() {
    let out = run(&["plan-samples", "--input-size", "1024", "--partitions", "4"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "label,size\np1,512\np2,256\np3,128\np4,64\n"
    );

    // An input too small for the ladder is a module error, not a crash.
    let out = run(&["plan-samples", "--input-size", "3", "--partitions", "4"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("error[sampling]"));
}

#[test]
fn invalid_thread_cap_warns_but_does_not_fail() {
    let out = run_env(
        &["plan-samples", "--input-size", "16", "--partitions", "2"],
        &[("LOTARU_THREADS", "many")],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr_of(&out).contains("LOTARU_THREADS"), "stderr: {}", stderr_of(&out));

    let out = run_env(
        &["plan-samples", "--input-size", "16", "--partitions", "2"],
        &[("LOTARU_THREADS", "2")],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(stderr_of(&out).is_empty());
}

#[test]
fn evaluate_rejects_unknown_estimators_and_groupings() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "evaluate",
        "--traces",
        to_str(&fixture("reference_cluster/traces.csv")),
        "--profiles",
        to_str(&fixture("reference_cluster/profiles")),
        "--local",
        "local",
        "--estimator",
        "psychic",
        "--out",
        to_str(&tmp.path().join("report")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("psychic"));

    let out = run(&[
        "evaluate",
        "--traces",
        to_str(&fixture("reference_cluster/traces.csv")),
        "--profiles",
        to_str(&fixture("reference_cluster/profiles")),
        "--local",
        "local",
        "--group-by",
        "by-moon-phase",
        "--out",
        to_str(&tmp.path().join("report")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_supports_a_single_global_summary() {
    // Extend the bundled fixture with observed runs on the other nodes so the
    // harness has targets to score.
    let tmp = tempfile::tempdir().unwrap();
    let traces = tmp.path().join("traces.csv");
    let mut text = fs::read_to_string(fixture("reference_cluster/traces.csv")).unwrap();
    text.push_str("demo,align,n1,134000,750,1500,Normal,\n");
    text.push_str("demo,align,n2,97000,750,1500,Normal,\n");
    fs::write(&traces, text).unwrap();

    let report = tmp.path().join("report");
    let out = run(&[
        "evaluate",
        "--traces",
        to_str(&traces),
        "--profiles",
        to_str(&fixture("reference_cluster/profiles")),
        "--local",
        "local",
        "--estimator",
        "all",
        "--group-by",
        "none",
        "--out",
        to_str(&report),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));

    let summaries = fs::read_to_string(report.join("summaries.csv")).unwrap();
    let lines: Vec<&str> = summaries.lines().collect();
    assert_eq!(lines.len(), 2, "header plus exactly one global row:\n{summaries}");
    assert!(lines[0].starts_with("mpe,"), "no key columns in the global grouping");
}
