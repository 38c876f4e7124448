//! End-to-end runs of the `gammasort` binary: exit codes, stdout shape,
//! and byte-level determinism of every artifact it writes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gammasort_core::model::{network_to_json, NetworkBuilder};
use serde_json::{json, Value};
use tempfile::TempDir;

// ── Harness ──────────────────────────────────────────────────────────────

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run(subcommand: &str, config: &Path, out: Option<&Path>, extra: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gammasort"));
    cmd.arg(subcommand).arg("--config").arg(config);
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.args(extra);
    cmd.output().expect("gammasort binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("process exited")
}

fn assert_ok(o: &Output) {
    assert_eq!(code(o), 0, "stderr:\n{}", stderr(o));
}

fn write_config(dir: &Path, body: Value) -> PathBuf {
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

/// A standalone config pointing at the committed fixtures by absolute
/// path, sized so `simulate` finishes quickly.
fn small_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        json!({
            "schema_version": 1,
            "network": fixtures_dir().join("sorting-line.json"),
            "evidence": fixtures_dir().join("assay.json"),
            "policy": { "c_hat": 0.0, "divert_cost": 1.0, "error_cost": 10.0 },
            "seed": 7,
            "sensor": "SS",
            "target": "SCD",
            "assay": "ACD",
            "batches": 2,
            "samples_per_batch": 60,
            "curve_points": 128
        }),
    )
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

// ── validate ─────────────────────────────────────────────────────────────

#[test]
fn validate_accepts_the_reference_network() {
    let out = run("validate", &fixtures_dir().join("run.json"), None, &[]);
    assert_ok(&out);
    assert!(stdout(&out).contains("ok: network 'sorting-line'"));
}

#[test]
fn validate_lists_violations_and_exits_1() {
    let tmp = TempDir::new().unwrap();
    let mut b = NetworkBuilder::new("leaky");
    b.discrete("K", &["a", "b"], &[], vec![vec![0.6, 0.3]]);
    let net_path = tmp.path().join("leaky.json");
    std::fs::write(&net_path, network_to_json(&b.build())).unwrap();
    let config = write_config(
        tmp.path(),
        json!({ "schema_version": 1, "network": net_path }),
    );

    let out = run("validate", &config, None, &[]);
    assert_eq!(code(&out), 1, "stderr:\n{}", stderr(&out));
    assert!(stdout(&out).contains("K: CPT row 0 sums to"));
    assert!(stderr(&out).contains("1 violation(s)"));
}

#[test]
fn missing_network_file_exits_2() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        json!({ "schema_version": 1, "network": "no-such.json" }),
    );
    let out = run("validate", &config, None, &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cannot read network"));
}

#[test]
fn missing_config_flag_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_gammasort"))
        .arg("validate")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--config"));
}

#[test]
fn unsupported_config_schema_exits_2() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        json!({ "schema_version": 9, "network": "x.json" }),
    );
    let out = run("validate", &config, None, &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("schema"));
}

// ── infer ────────────────────────────────────────────────────────────────

#[test]
fn infer_echoes_evidence_and_reports_the_posterior() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(
        "infer",
        &fixtures_dir().join("run.json"),
        Some(&out_dir),
        &[],
    );
    assert_ok(&out);

    let text = stdout(&out);
    let doc: Value = serde_json::from_str(&text).expect("stdout is JSON");
    assert_eq!(doc["network"], "sorting-line");
    assert!((doc["evidence"]["ACD"].as_f64().unwrap() - (-2.4)).abs() < 1e-12);

    // The waste-class posterior is a proper distribution over 3 states.
    let wc = doc["discrete"]["WC"].as_array().unwrap();
    assert_eq!(wc.len(), 3);
    let total: f64 = wc.iter().map(|row| row["p"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    // The contamination posterior carries one component per source
    // configuration; the observed assay node is not reported.
    assert_eq!(doc["continuous"]["SCD"]["components"].as_array().unwrap().len(), 24);
    assert!(doc["continuous"].get("ACD").is_none());

    // The written artifact is exactly what was printed.
    assert_eq!(read(&out_dir, "posteriors.json"), text.trim_end_matches('\n'));
}

#[test]
fn infer_without_evidence_reports_the_prior() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        json!({
            "schema_version": 1,
            "network": fixtures_dir().join("sorting-line.json")
        }),
    );
    let out = run("infer", &config, Some(&tmp.path().join("out")), &[]);
    assert_ok(&out);

    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    // With nothing observed, the waste-class marginal is its prior:
    // raw weights 5.5 : 1.5 : 1.2.
    let wc = doc["discrete"]["WC"].as_array().unwrap();
    assert!((wc[0]["p"].as_f64().unwrap() - 5.5 / 8.2).abs() < 1e-12);
    assert!((wc[1]["p"].as_f64().unwrap() - 1.5 / 8.2).abs() < 1e-12);
    assert!((wc[2]["p"].as_f64().unwrap() - 1.2 / 8.2).abs() < 1e-12);
    assert_eq!(doc["evidence"].as_object().unwrap().len(), 0);
}

// ── compile ──────────────────────────────────────────────────────────────

#[test]
fn compile_writes_byte_identical_artifacts_across_reruns() {
    let tmp = TempDir::new().unwrap();
    let config = fixtures_dir().join("run.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));

    let first = run("compile", &config, Some(&a), &[]);
    assert_ok(&first);
    let second = run("compile", &config, Some(&b), &[]);
    assert_ok(&second);

    assert!(stdout(&first).contains("components: 24"));
    assert_eq!(stdout(&first), stdout(&second));
    for name in ["model.json", "rule.json", "rule.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs across reruns");
    }
    assert!(read(&a, "rule.csv").starts_with("interval,divert_from,divert_to\n"));
}

#[test]
fn compile_with_cost_ratio_at_one_writes_an_empty_rule() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        json!({
            "schema_version": 1,
            "network": fixtures_dir().join("sorting-line.json"),
            "evidence": fixtures_dir().join("assay.json"),
            "policy": { "c_hat": 0.0, "divert_cost": 5.0, "error_cost": 5.0 },
            "sensor": "SS",
            "target": "SCD"
        }),
    );
    let out_dir = tmp.path().join("out");
    let out = run("compile", &config, Some(&out_dir), &[]);
    assert_ok(&out);
    assert!(stdout(&out).contains("intervals: 0"));
    assert_eq!(read(&out_dir, "rule.csv"), "interval,divert_from,divert_to\n");
}

#[test]
fn compile_without_policy_exits_2() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        json!({
            "schema_version": 1,
            "network": fixtures_dir().join("sorting-line.json"),
            "sensor": "SS",
            "target": "SCD"
        }),
    );
    let out = run("compile", &config, Some(&tmp.path().join("out")), &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("policy"));
}

#[test]
fn compile_with_unknown_sensor_label_exits_2() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        json!({
            "schema_version": 1,
            "network": fixtures_dir().join("sorting-line.json"),
            "policy": { "c_hat": 0.0, "divert_cost": 1.0, "error_cost": 10.0 },
            "sensor": "BOGUS",
            "target": "SCD"
        }),
    );
    let out = run("compile", &config, Some(&tmp.path().join("out")), &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("BOGUS"));
}

// ── simulate ─────────────────────────────────────────────────────────────

#[test]
fn simulate_is_deterministic_and_the_oracle_never_violates() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));

    let first = run("simulate", &config, Some(&a), &[]);
    assert_ok(&first);
    let second = run("simulate", &config, Some(&b), &[]);
    assert_ok(&second);

    assert_eq!(stdout(&first), stdout(&second));
    for name in ["simulation.csv", "summary.csv", "trace.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs across reruns");
    }

    // simulation.csv: batch,seed,controller,samples,diverted,violations,...
    let sim = read(&a, "simulation.csv");
    let mut oracle_rows = 0;
    for line in sim.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 11, "unexpected row shape: {line}");
        if cols[2] == "oracle" {
            oracle_rows += 1;
            assert_eq!(cols[5].parse::<f64>().unwrap(), 0.0, "oracle violated: {line}");
            assert_eq!(cols[10].parse::<f64>().unwrap(), 0.0, "oracle regret: {line}");
        }
    }
    assert_eq!(oracle_rows, 2);

    let summary = read(&a, "summary.csv");
    assert_eq!(summary.lines().count(), 4, "header + one row per controller");
}

#[test]
fn simulate_seed_override_changes_the_trace() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));

    assert_ok(&run("simulate", &config, Some(&a), &[]));
    assert_ok(&run("simulate", &config, Some(&b), &["--seed", "8"]));
    assert_ne!(
        read(&a, "trace.csv"),
        read(&b, "trace.csv"),
        "a different seed must stage different batches"
    );
}

// ── report ───────────────────────────────────────────────────────────────

#[test]
fn report_emits_ellipses_and_a_consistent_decision_curve() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let out_dir = tmp.path().join("out");

    assert_ok(&run("compile", &config, Some(&out_dir), &[]));
    let out = run("report", &config, Some(&out_dir), &[]);
    assert_ok(&out);

    let text = stdout(&out);
    assert!(text.contains("components: 24"));
    assert!(text.contains("component angles positive: 24/24"));

    // One ellipse per component plus the moment-matched approximation.
    let ellipses = read(&out_dir, "ellipses.csv");
    let rows: Vec<&str> = ellipses.lines().collect();
    assert_eq!(rows.len(), 1 + 24 + 1);
    assert_eq!(rows[0], "center_x,center_y,axis1,axis2,angle_rad,weight,kind");
    assert!(rows[1..25].iter().all(|r| r.ends_with(",component")));
    assert!(rows[25].ends_with(",approximation"));

    // Per-component tilt is positive (sensor rises with contamination);
    // the blended approximation tilts the other way.
    let angle = |row: &str| row.split(',').nth(4).unwrap().parse::<f64>().unwrap();
    assert!(rows[1..25].iter().all(|r| angle(r) > 0.0));
    assert!(angle(rows[25]) < 0.0);

    // The decision curve commits to divert exactly where the posterior
    // tail mass clears the cost ratio (rows near the bisected boundary
    // are allowed to sit on either side).
    let curve = read(&out_dir, "decision_curve.csv");
    let curve_rows: Vec<&str> = curve.lines().collect();
    assert_eq!(curve_rows[0], "s,tail_prob,threshold,action");
    assert_eq!(curve_rows.len(), 1 + 128);
    let mut diverts = 0;
    for line in &curve_rows[1..] {
        let cols: Vec<&str> = line.split(',').collect();
        let tail: f64 = cols[1].parse().unwrap();
        let threshold: f64 = cols[2].parse().unwrap();
        if cols[3] == "divert" {
            diverts += 1;
        }
        if (tail - threshold).abs() > 1e-6 {
            assert_eq!(
                cols[3] == "divert",
                tail > threshold,
                "action disagrees with the tail mass: {line}"
            );
        }
    }
    assert!(diverts > 0 && diverts < 128, "curve must cross the threshold");
}

#[test]
fn report_without_a_compiled_model_exits_2() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let out = run("report", &config, Some(&tmp.path().join("empty")), &[]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("run `gammasort compile` first"));
}
