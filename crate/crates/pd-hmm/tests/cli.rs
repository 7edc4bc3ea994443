//! End-to-end checks of the `pdhmm` binary: pipeline determinism,
//! serialization round trips, and machine-readable failures.

use std::path::Path;
use std::process::{Command, Output};

fn pdhmm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdhmm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
            "alpha": 0.1, "theta": 1.5,
            "schedule": {"start": 0.0, "step": 0.05, "count": 6},
            "sizes": 8, "seed": 12, "draws": 2000
        }"#,
    )
    .unwrap();
    path
}

fn run_pipeline(dir: &Path) {
    write_config(dir);
    let ok = |args: &[&str]| {
        let out = pdhmm(dir, args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    ok(&[
        "simulate", "--config", "config.json", "--out", "obs.jsonl", "--truth", "truth.csv",
    ]);
    ok(&[
        "filter", "--config", "config.json", "--obs", "obs.jsonl", "--states", "states.json",
        "--summary", "summary.csv", "--prune", "top:20",
    ]);
    ok(&[
        "score", "--summary", "summary.csv", "--truth", "truth.csv", "--kappa", "0.05", "--out",
        "scores.csv",
    ]);
}

#[test]
fn simulate_filter_score_pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path());
    run_pipeline(b.path());
    for file in ["obs.jsonl", "truth.csv", "states.json", "summary.csv", "scores.csv"] {
        let left = std::fs::read(a.path().join(file)).unwrap();
        let right = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(left, right, "{file} differs between identical runs");
    }
}

#[test]
fn state_and_observation_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(dir.path());
    let seq = pd_hmm::harness::read_observations(&dir.path().join("obs.jsonl")).unwrap();
    assert_eq!(seq.len(), 6);
    let reread = dir.path().join("obs2.jsonl");
    pd_hmm::harness::write_observations(&reread, &seq).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("obs.jsonl")).unwrap(),
        std::fs::read(&reread).unwrap()
    );

    let states = pd_hmm::harness::read_states(&dir.path().join("states.json")).unwrap();
    assert_eq!(states.kind, "filtered");
    assert_eq!(states.states.len(), 6);
    for state in &states.states {
        let json = serde_json::to_string(state).unwrap();
        let back: pd_hmm::filter::MixtureState = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, state);
    }
}

#[test]
fn smooth_interpolate_forecast_and_fit_run() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(dir.path());
    let ok = |args: &[&str]| {
        let out = pdhmm(dir.path(), args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    };
    ok(&[
        "smooth", "--config", "config.json", "--obs", "obs.jsonl", "--states", "smooth.json",
        "--prune", "top:20",
    ]);
    assert_eq!(
        pd_hmm::harness::read_states(&dir.path().join("smooth.json"))
            .unwrap()
            .kind,
        "smoothed"
    );
    ok(&[
        "interpolate", "--config", "config.json", "--obs", "obs.jsonl", "--at", "0.07,0.12",
        "--states", "interp.json", "--prune", "top:20",
    ]);
    ok(&[
        "forecast", "--config", "config.json", "--obs", "obs.jsonl", "--at", "0.5", "--states",
        "fc.json", "--prune", "top:20",
    ]);
    assert_eq!(
        pd_hmm::harness::read_states(&dir.path().join("fc.json"))
            .unwrap()
            .kind,
        "forecast"
    );
    let out = ok(&[
        "fit", "--config", "config.json", "--obs", "obs.jsonl", "--grid", "alpha=0,0.1",
        "theta=1.0:0.5:2.0", "--out", "evidence.csv", "--prune", "top:20",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("alpha_hat"), "fit output: {stdout}");
    let table = std::fs::read_to_string(dir.path().join("evidence.csv")).unwrap();
    assert!(table.starts_with("alpha,theta,log_evidence"));
    assert_eq!(table.lines().count(), 1 + 2 * 3);
}

#[test]
fn ingest_graph_round_trips_through_the_filter() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    std::fs::write(
        dir.path().join("edges.csv"),
        "0,a,b\n1,b,c\n1800,p,q\n1801,r,s\n3600,a,b\n",
    )
    .unwrap();
    let out = pdhmm(
        dir.path(),
        &[
            "ingest-graph", "--edges", "edges.csv", "--window", "1800", "--time-unit", "0.05",
            "--out", "net.jsonl",
        ],
    );
    assert!(out.status.success());
    let seq = pd_hmm::harness::read_observations(&dir.path().join("net.jsonl")).unwrap();
    assert_eq!(seq.len(), 3);
    assert_eq!(seq.partitions()[0].parts(), &[3]);
    assert_eq!(seq.partitions()[1].parts(), &[2, 2]);
    let filtered = pdhmm(
        dir.path(),
        &["filter", "--config", "config.json", "--obs", "net.jsonl"],
    );
    assert!(filtered.status.success());
    assert!(String::from_utf8_lossy(&filtered.stdout).contains("log_evidence"));
}

#[test]
fn failures_are_machine_readable_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"alpha": 2.0, "theta": 1.0}"#).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["filter", "--config", "bad.json", "--obs", "missing.jsonl"],
        vec!["filter", "--config", "missing.json", "--obs", "missing.jsonl"],
        vec!["score", "--summary", "missing.csv"],
        vec!["ingest-graph", "--edges", "missing.csv", "--out", "x.jsonl"],
    ];
    for args in cases {
        let out = pdhmm(dir.path(), &args);
        assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
        let stderr = String::from_utf8_lossy(&out.stderr);
        let line = stderr.lines().last().unwrap_or_default();
        let parsed: serde_json::Value =
            serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr not JSON: {stderr}"));
        assert!(parsed.get("error").is_some(), "no error field in {line}");
    }
}
