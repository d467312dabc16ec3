//! End-to-end checks of the `topoflock` binary: exit codes, file
//! outputs, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_topoflock"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn validate_accepts_all_bundled_scenarios() {
    for name in ["table2.json", "table3.json", "table3_delta.json"] {
        let out = bin().arg("validate").arg(scenario(name)).output().unwrap();
        assert!(out.status.success(), "{name}: {}", stderr(&out));
        let text = stdout(&out);
        assert!(text.contains("rational frequency ratios: OK"), "{text}");
        assert!(text.contains("distinct-spectrum member: OK"), "{text}");
    }
}

#[test]
fn validate_json_reports_spectra_and_periods() {
    let out = bin()
        .args(["validate", "--json"])
        .arg(scenario("table3.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["n"], 4);
    let eig = report["modes"][1]["eigenvalues"].as_array().unwrap();
    let expected = [0.0, 1.0, 4.0, 9.0];
    for (v, e) in eig.iter().zip(expected) {
        assert!((v.as_f64().unwrap() - e).abs() < 1e-9);
    }
    let period = report["modes"][0]["period"]["value"].as_f64().unwrap();
    assert!((period - 2.0 * std::f64::consts::PI).abs() < 1e-12);
}

#[test]
fn validate_rejects_malformed_and_irrational_inputs() {
    let dir = tempfile::tempdir().unwrap();

    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{ not json").unwrap();
    let out = bin().arg("validate").arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // 3-agent star twice: spectrum {0, 1, 3}, sqrt(3) irrational.
    let star3 = serde_json::json!({
        "name": "irrational",
        "topologies": [
            {"n": 3, "weights": [[0, 1, 1], [1, 0, 0], [1, 0, 0]]},
            {"n": 3, "weights": [[0, 1, 1], [1, 0, 0], [1, 0, 0]]}
        ],
        "initial": {"x": [1, 2, 3], "v": [0, 0, 0]}
    });
    let path = dir.path().join("irrational.json");
    std::fs::write(&path, star3.to_string()).unwrap();
    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("rational-ratio condition"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn plan_emits_the_expected_dwell_times() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("plan.json");
    let out = bin()
        .arg("plan")
        .arg(scenario("table3.json"))
        .args(["--tau-hat", "0.5", "--m", "1", "--out"])
        .arg(&plan_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));

    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&plan_path).unwrap()).unwrap();
    let tau = std::f64::consts::PI + 0.5;
    for key in ["1", "2"] {
        let d = plan["dwell"][key].as_f64().unwrap();
        assert!((d - tau).abs() < 1e-12, "dwell {d}");
    }
    assert!(plan["alpha"].as_f64().unwrap() > plan["xi"].as_f64().unwrap());

    // The emitted plan passes its own certificate...
    let out = bin()
        .args(["verify", "--certificate"])
        .arg(&plan_path)
        .arg(scenario("table3.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("PASS"));

    // ...and a tampered one (alpha dropped to xi) fails on the tail rows.
    let mut tampered: serde_json::Value = plan.clone();
    tampered["alpha"] = serde_json::json!(8.0);
    let bad_path = dir.path().join("tampered.json");
    std::fs::write(&bad_path, tampered.to_string()).unwrap();
    let out = bin()
        .args(["verify", "--certificate"])
        .arg(&bad_path)
        .arg(scenario("table3.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("VIOLATED"), "{}", stdout(&out));
    assert!(stdout(&out).contains("tail"));
}

#[test]
fn plan_reports_infeasible_targets() {
    let out = bin()
        .arg("plan")
        .arg(scenario("table3.json"))
        .args(["--tau-hat", "1e6"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("no feasible switching parameters"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn simulate_fixed_mode_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &Path| {
        let out = bin()
            .arg("simulate")
            .args(["--fixed-mode", "2", "--out-dir"])
            .arg(sub)
            .arg(scenario("table2.json"))
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(sub.join("table2_trace.csv")).unwrap()
    };
    let a_dir = dir.path().join("a");
    let b_dir = dir.path().join("b");
    std::fs::create_dir_all(&a_dir).unwrap();
    std::fs::create_dir_all(&b_dir).unwrap();
    let a = run(&a_dir);
    let b = run(&b_dir);
    assert!(!a.is_empty());
    assert_eq!(a, b, "repeated runs must produce byte-identical traces");

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a_dir.join("table2_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["switch_count"], 0);
    // Fixed topology keeps oscillating; the disagreement stays positive.
    assert!(summary["final_v"].as_f64().unwrap() > 1.0);
}

#[test]
fn simulate_with_plan_directive_switches() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("simulate")
        .args(["--out-dir"])
        .arg(dir.path())
        .arg(scenario("table3.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("table3_summary.json")).unwrap(),
    )
    .unwrap();
    // 200 time units at dwell pi + 0.5 per mode.
    assert_eq!(summary["switch_count"], 54);

    let csv = std::fs::read_to_string(dir.path().join("table3_trace.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "t,x1,x2,x3,x4,v1,v2,v3,v4,sigma,F");
    // Modes alternate in the sigma column.
    assert!(csv.lines().any(|l| l.ends_with(",2") || l.contains(",2,")));
}

#[test]
fn run_reports_horizon_exit_code_when_delta_is_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("run")
        .args(["--out-dir"])
        .arg(dir.path())
        .arg(scenario("table3_delta.json"))
        .output()
        .unwrap();
    // The volume-preserving switched flow never drives F below delta, so
    // the run ends at the horizon: exit code 2 by contract.
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("table3_delta_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["verdict"], "horizon-reached");
    assert_eq!(summary["stopped_at"], "horizon");
    assert!(summary["switch_count"].as_u64().unwrap() > 100);
    assert!(summary["estimates"].as_array().unwrap().len() > 100);
    assert!(dir.path().join("table3_delta_trace.csv").exists());
}

#[test]
fn run_with_generous_delta_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario("table3_delta.json")).unwrap())
            .unwrap();
    doc["metric"]["delta"] = serde_json::json!(1e6);
    doc["name"] = serde_json::json!("generous");
    let path = dir.path().join("generous.json");
    std::fs::write(&path, doc.to_string()).unwrap();

    let out = bin()
        .arg("run")
        .args(["--out-dir"])
        .arg(dir.path())
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("generous_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["verdict"], "delta-consensus");
    assert_eq!(summary["switch_count"], 0);
}

#[test]
fn run_without_metric_section_is_a_config_error() {
    let out = bin()
        .arg("run")
        .arg(scenario("table3.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("delta"), "{}", stderr(&out));
}

#[test]
fn batch_jobs_processes_scenarios_in_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("validate")
        .args(["--jobs", "2"])
        .arg(scenario("table2.json"))
        .arg(scenario("table3.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    // Output blocks appear in input order regardless of scheduling.
    let t2 = text.find("scenario table2").unwrap();
    let t3 = text.find("scenario table3").unwrap();
    assert!(t2 < t3);
    drop(dir);
}

#[test]
fn verify_prop1_sweep_passes() {
    let out = bin()
        .args(["verify", "--prop1", "--kappa", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("strictly negative"), "{text}");

    let out = bin()
        .args(["verify", "--prop1", "--kappa", "8", "--grid", "10000"])
        .output()
        .unwrap();
    assert!(out.status.success());
}
