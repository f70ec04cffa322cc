//! End-to-end drive of the `vvo` binary: validate, generate, train,
//! solve both modes, bench, report.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vvo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vvo"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn feeder_validate_ok_and_error_paths() {
    run_ok(vvo().args(["feeder", "validate", "--feeder"]).arg(data("ring4.json")));

    // A corrupted document exits nonzero.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(data("ring4.json")).unwrap();
    std::fs::write(&bad, text.replace("\"d1\": 2", "\"d1\": 0")).unwrap();
    let out = vvo()
        .args(["feeder", "validate", "--feeder"])
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn full_pipeline_on_ring4() {
    let dir = tempfile::tempdir().unwrap();
    let feeder = data("ring4.json");
    let profiles = dir.path().join("profiles.csv");
    let scen = dir.path().join("scen");
    let dataset = dir.path().join("dataset");
    let weights = dir.path().join("weights.json");
    let solution_exact = dir.path().join("exact.json");
    let solution_neural = dir.path().join("neural.json");
    let bench_csv = dir.path().join("bench.csv");
    let traces = dir.path().join("traces");
    let report_txt = dir.path().join("report.txt");

    run_ok(vvo()
        .args(["datagen", "profiles", "--horizon", "4", "--load-peak-kw", "60", "--feeder"])
        .arg(&feeder)
        .arg("--out")
        .arg(&profiles));

    run_ok(vvo()
        .args(["datagen", "scenarios", "--horizon", "4", "--n", "4", "--seed", "3", "--feeder"])
        .arg(&feeder)
        .arg("--profiles")
        .arg(&profiles)
        .arg("--out")
        .arg(&scen));
    assert!(scen.with_extension("csv").exists());
    assert!(scen.with_extension("manifest.json").exists());

    run_ok(vvo()
        .args([
            "datagen", "samples", "--horizon", "4", "--n", "12", "--mode", "accelerated",
            "--seed", "5", "--scenarios-per-instance", "3", "--feeder",
        ])
        .arg(&feeder)
        .arg("--profiles")
        .arg(&profiles)
        .arg("--out")
        .arg(&dataset));
    assert!(dataset.join("manifest.json").exists());

    run_ok(vvo()
        .args(["train", "--seed", "1", "--epochs", "60", "--feeder"])
        .arg(&feeder)
        .arg("--dataset")
        .arg(&dataset)
        .arg("--out")
        .arg(&weights));
    assert!(weights.exists());

    // Exact solve writes a schema-complete solution.
    run_ok(vvo()
        .args(["solve", "--mode", "exact", "--feeder"])
        .arg(&feeder)
        .arg("--scenarios")
        .arg(&scen)
        .arg("--out")
        .arg(&solution_exact));
    let sol: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&solution_exact).unwrap()).unwrap();
    for key in ["feeder", "mode", "status", "objective", "first_stage", "scenarios", "solver"] {
        assert!(sol.get(key).is_some(), "missing {key}");
    }
    assert_eq!(sol["mode"], "exact");

    // Neural without weights is a usage error.
    let out = vvo()
        .args(["solve", "--mode", "neural", "--feeder"])
        .arg(&feeder)
        .arg("--scenarios")
        .arg(&scen)
        .arg("--out")
        .arg(&solution_neural)
        .output()
        .unwrap();
    assert!(!out.status.success());

    run_ok(vvo()
        .args(["solve", "--mode", "neural", "--feeder"])
        .arg(&feeder)
        .arg("--scenarios")
        .arg(&scen)
        .arg("--weights")
        .arg(&weights)
        .arg("--out")
        .arg(&solution_neural));
    let sol: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&solution_neural).unwrap()).unwrap();
    assert_eq!(sol["mode"], "neural");
    assert!(sol["neural"]["predicted_recourse_cost"].is_number());
    assert!(sol["neural"]["evaluated_recourse_cost"].is_number());

    run_ok(vvo()
        .args([
            "bench", "--horizon", "4", "--instances", "2", "--scenario-counts", "3",
            "--seed", "7", "--feeder",
        ])
        .arg(&feeder)
        .arg("--profiles")
        .arg(&profiles)
        .arg("--weights")
        .arg(&weights)
        .arg("--out")
        .arg(&bench_csv)
        .arg("--traces")
        .arg(&traces));
    let text = std::fs::read_to_string(&bench_csv).unwrap();
    assert!(text.starts_with("instance,scenarios,exact_objective"));
    assert!(text.contains("agg_median"));

    run_ok(vvo()
        .args(["report", "--bench"])
        .arg(&bench_csv)
        .arg("--traces")
        .arg(&traces)
        .arg("--out")
        .arg(&report_txt));
    let report = std::fs::read_to_string(&report_txt).unwrap();
    assert!(report.contains("median gap%"));

    // Empty bench CSV is an error.
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "instance,scenarios\n").unwrap();
    let out = vvo()
        .args(["report", "--bench"])
        .arg(&empty)
        .arg("--out")
        .arg(dir.path().join("nothing.txt"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn scenario_files_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let feeder = data("toy10.json");
    let profiles = dir.path().join("profiles.csv");
    run_ok(vvo()
        .args(["datagen", "profiles", "--horizon", "4", "--feeder"])
        .arg(&feeder)
        .arg("--out")
        .arg(&profiles));
    for stem in ["a", "b"] {
        run_ok(vvo()
            .args(["datagen", "scenarios", "--horizon", "4", "--n", "6", "--seed", "11", "--feeder"])
            .arg(&feeder)
            .arg("--profiles")
            .arg(&profiles)
            .arg("--out")
            .arg(dir.path().join(stem)));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}
