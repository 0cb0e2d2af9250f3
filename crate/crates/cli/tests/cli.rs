use std::path::PathBuf;

use serde_json::Value;

use stvs_cli::{run, EXIT_OK, EXIT_VALIDATION};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn stvs(args: &[&str], stdin: &str) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("stvs").chain(args.iter().copied());
    let code = run(argv, &mut stdin.as_bytes(), &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stvs-cli-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn synth_csv(kind: &str, params: &[&str]) -> String {
    let mut args = vec!["synth", kind];
    args.extend_from_slice(params);
    let o = stvs(&args, "");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    o.stdout
}

#[test]
fn thresholds_prints_critical_value() {
    let o = stvs(&["thresholds", "--bins", "20", "--lo", "0", "--hi", "1.5", "--gamma2", "10"], "");
    assert_eq!(o.code, EXIT_OK);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    assert!((v["threshold"].as_f64().unwrap() - 2.09).abs() <= 0.05);
    assert_eq!(v["reference"].as_array().unwrap().len(), 20);
}

#[test]
fn assess_emits_documented_fields() {
    let path = scratch("case.csv");
    std::fs::write(&path, synth_csv("mixed", &[])).unwrap();
    let o = stvs(&["assess", "--in", path.to_str().unwrap(), "--t0", "1.1", "--window", "3.0"], "");
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    for key in ["index", "threshold", "margin", "class"] {
        assert!(!v["oscillation"][key].is_null(), "missing oscillation.{key}");
    }
    assert!(v["generators"].is_array());
    assert_eq!(v["config"]["window_s"].as_f64().unwrap(), 3.0);
    assert!(v["latency_s"].is_number());
}

#[test]
fn nan_input_is_a_validation_error() {
    let o = stvs(&["assess", "--t0", "0.02"], "time,V:G1\n0.0,1.0\n0.02,NaN\n0.04,1.0\n");
    assert_eq!(o.code, EXIT_VALIDATION);
    assert!(o.stderr.contains("row 1"), "{}", o.stderr);
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_flag_is_rejected() {
    let o = stvs(&["assess", "--bogus"], "");
    assert_eq!(o.code, EXIT_VALIDATION);
    assert!(o.stderr.contains("--bogus"));
}

#[test]
fn out_of_range_grid_is_rejected() {
    let o = stvs(&["thresholds", "--lo", "1", "--hi", "0.5"], "");
    assert_eq!(o.code, EXIT_VALIDATION, "{}", o.stderr);
}

#[test]
fn malformed_config_is_rejected() {
    let path = scratch("bad.cfg");
    std::fs::write(&path, "[G1]\nxd_prime = 0.1\nwhat = 3\n").unwrap();
    let o = stvs(&["assess", "--gen-config", path.to_str().unwrap(), "--t0", "1.1"], &synth_csv("mixed", &[]));
    assert_eq!(o.code, EXIT_VALIDATION);
    assert!(o.stderr.contains("what"), "{}", o.stderr);
}

#[test]
fn stream_reports_follow_the_data() {
    let csv = synth_csv("stable-osc", &[]);
    let o = stvs(&["assess", "--stream", "--t0", "1.1", "--report-interval", "0.1"], &csv);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let lines: Vec<Value> = o.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() >= 25, "{} lines", lines.len());
    assert!(lines[0]["latency_s"].as_f64().unwrap() <= 0.6 + 1e-9);

    let batch = stvs(&["assess", "--t0", "1.1"], &csv);
    let batch: Value = serde_json::from_str(&batch.stdout).unwrap();
    assert_eq!(lines.last().unwrap(), &batch);
}

#[test]
fn stream_reports_out_of_order_rows_and_continues() {
    let csv = synth_csv("stable-osc", &[]);
    let mut rows: Vec<&str> = csv.lines().collect();
    let dup = rows[10];
    rows.insert(20, dup);
    let text = rows.join("\n") + "\n";
    let o = stvs(&["assess", "--stream", "--t0", "1.1"], &text);
    assert_eq!(o.code, EXIT_OK);
    let lines: Vec<Value> = o.stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["kind"], "out-of-order");
    assert_eq!(lines[0]["row"], 19);
    assert!(lines.len() >= 26);
}

#[test]
fn empty_stream_is_silent() {
    let o = stvs(&["assess", "--stream", "--t0", "1.0"], "");
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.is_empty());
}

#[test]
fn stream_without_t0_is_rejected() {
    let o = stvs(&["assess", "--stream"], &synth_csv("stable-osc", &[]));
    assert_eq!(o.code, EXIT_VALIDATION);
}

#[test]
fn synth_is_reproducible_under_a_seed() {
    let a = synth_csv("mixed", &["sigma=0.01", "--seed", "7"]);
    let b = synth_csv("mixed", &["sigma=0.01", "--seed", "7"]);
    let c = synth_csv("mixed", &["sigma=0.01", "--seed", "8"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.starts_with("time,V:G1,V:G2,V:G3"));
}

#[test]
fn synth_rejects_unknown_parameters() {
    let o = stvs(&["synth", "mixed", "wobble=3"], "");
    assert_eq!(o.code, EXIT_VALIDATION);
    let o = stvs(&["synth", "earthquake"], "");
    assert_eq!(o.code, EXIT_VALIDATION);
}

#[test]
fn decompose_writes_imf_and_residual_columns() {
    let out = scratch("decomp.csv");
    let o = stvs(&["decompose", "--t0", "1.1", "--out", out.to_str().unwrap()], &synth_csv("mixed", &[]));
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let text = std::fs::read_to_string(out).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("t,V:G1,IMF1:G1"), "{header}");
    assert!(header.contains("R:G3"));
    assert_eq!(text.lines().count(), 151);
}

#[test]
fn exponents_lists_every_target() {
    let o = stvs(&["exponents", "--t0", "1.1"], &synth_csv("mixed", &[]));
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let mut lines = o.stdout.lines();
    assert_eq!(lines.next().unwrap(), "target,k,t,lambda,divergence_factor");
    let targets: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert!(targets.contains("IMF") && targets.contains("R:G1"), "{targets:?}");
}

#[test]
fn tune_needs_generators_and_reports_them() {
    let csv = synth_csv("stalled-recovery", &[]);
    let o = stvs(&["tune", "--t0", "1.1"], &csv);
    assert_eq!(o.code, EXIT_VALIDATION);

    let cfg = scratch("gens.cfg");
    std::fs::write(&cfg, "gamma1_points = 20\n[G1]\nxd_prime = 0.1\np_active = 0.8\npickup = (1.0, 20)\n").unwrap();
    let o = stvs(&["tune", "--t0", "1.1", "--gen-config", cfg.to_str().unwrap()], &csv);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    let g = &v["generators"][0];
    assert_eq!(g["id"], "G1");
    assert!(g["tuning"]["gamma1"].as_f64().unwrap() >= 1.0);
}
