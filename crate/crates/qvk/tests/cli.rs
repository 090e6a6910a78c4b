use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn qvk(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qvk"));
    cmd.args(args).env_remove("QVK_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("qvk runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn assert_constants(v: &Value) {
    let c = &v["constants"];
    for key in ["theta0", "K", "C0", "delta"] {
        assert!(c[key].as_f64().is_some_and(|x| x > 0.0), "constants.{key} in {c}");
    }
}

#[test]
fn metric_of_a_point_with_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.json", r#"{"Q": 3, "n": 2, "points": [[0, 1], [2, 3], [-1, 0.5]]}"#);
    let b = write(&dir, "b.json", r#"{"Q": 3, "n": 2, "points": [[2, 3], [-1, 0.5], [0, 1]]}"#);
    let v = report(&qvk(&["metric", "--input", s(&a), s(&b)], &[]));
    assert_eq!(v["distance"].as_f64(), Some(0.0));
    assert_eq!(v["matching"], serde_json::json!([2, 0, 1]));
    assert_constants(&v);
}

#[test]
fn metric_between_single_points_is_euclidean() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.json", r#"{"Q": 1, "n": 2, "points": [[0, 0]]}"#);
    let b = write(&dir, "b.json", r#"{"Q": 1, "n": 2, "points": [[1, 1]]}"#);
    let v = report(&qvk(&["metric", "--input", s(&a), s(&b)], &[]));
    assert_eq!(v["distance"].as_f64(), Some(2f64.sqrt()));
}

#[test]
fn floats_carry_seventeen_significant_digits() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.json", r#"{"Q": 1, "n": 2, "points": [[0, 0]]}"#);
    let b = write(&dir, "b.json", r#"{"Q": 1, "n": 2, "points": [[1, 1]]}"#);
    let out = qvk(&["metric", "--input", s(&a), s(&b)], &[]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"distance\": 1.4142135623730951e0"), "{text}");
}

#[test]
fn malformed_input_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let good = write(&dir, "good.json", r#"{"Q": 1, "n": 1, "points": [[0]]}"#);
    let broken = write(&dir, "broken.json", "{\"Q\": 1,");
    let short = write(&dir, "short.json", r#"{"Q": 2, "n": 1, "points": [[0]]}"#);
    let unknown = write(&dir, "unknown.json", r#"{"Q": 1, "n": 1, "points": [[0]], "x": 1}"#);
    for bad in [&broken, &short, &unknown] {
        let out = qvk(&["metric", "--input", s(bad), s(&good)], &[]);
        assert_eq!(out.status.code(), Some(2), "{}", bad.display());
    }
    let missing = dir.path().join("missing.json");
    assert_eq!(qvk(&["metric", "--input", s(&missing), s(&good)], &[]).status.code(), Some(2));
    assert_eq!(qvk(&["metric", "--input", s(&good)], &[]).status.code(), Some(2));
    assert_eq!(qvk(&["analyze"], &[]).status.code(), Some(2));
    assert_eq!(qvk(&["analyze", "--grid", "9,9,0.25", "--nQ", "1,2"], &[]).status.code(), Some(2));
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(qvk(&["--help"], &[]).status.code(), Some(0));
    assert_eq!(qvk(&["--version"], &[]).status.code(), Some(0));
    assert_eq!(qvk(&["nonsense"], &[]).status.code(), Some(2));
}

#[test]
fn a_single_site_has_a_trivial_chain() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.json", r#"{"Q": 3, "n": 1, "points": [[2], [2], [2]]}"#);
    let v = report(&qvk(&["chain", "--input", s(&p)], &[]));
    assert_eq!(v["depth"], 0);
    assert_eq!(v["levels"][0]["multiplicities"], serde_json::json!([3]));
    assert_eq!(v["invariants_passed"], true);
    assert_constants(&v);
}

#[test]
fn two_sites_merge_at_eighty_one_sigma() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "p.json", r#"{"Q": 2, "n": 1, "points": [[0], [1]]}"#);
    let v = report(&qvk(&["chain", "--input", s(&p), "--samples", "200"], &[]));
    let levels = v["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    // Separation 1, so σ₀ = 1/4.
    let sigma0 = levels[0]["sigma"].as_f64().unwrap();
    assert_eq!(sigma0, 0.25);
    assert_eq!(levels[1]["rho"].as_f64().unwrap(), 81.0 * sigma0);
    assert!(levels[1]["sigma"].is_null());
    assert_eq!(v["inclusion"]["passed"], true);
}

#[test]
fn the_hopf_differential_of_a_constant_field_vanishes() {
    let dir = TempDir::new().unwrap();
    let (nx, ny) = (6, 5);
    let values: Vec<String> = (0..nx * ny).flat_map(|_| ["1.5", "-2", "0.25", "3"]).map(String::from).collect();
    let mask: Vec<&str> = (0..nx * ny)
        .map(|idx| {
            let (i, j) = (idx % nx, idx / nx);
            if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 { "true" } else { "false" }
        })
        .collect();
    let text = format!(
        r#"{{"nx": {nx}, "ny": {ny}, "x0": 0, "y0": 0, "h": 0.5, "Q": 2, "n": 2,
            "values": [{}], "boundary_mask": [{}]}}"#,
        values.join(","),
        mask.join(",")
    );
    let f = write(&dir, "f.json", &text);
    let csv = dir.path().join("phi.csv");
    let v = report(&qvk(&["analyze", "--input", s(&f), "--csv", s(&csv)], &[]));
    assert_eq!(v["hopf_sup"].as_f64(), Some(0.0));
    assert_eq!(v["matched_energy"].as_f64(), Some(0.0));
    assert_constants(&v);
    let rows = std::fs::read_to_string(&csv).unwrap();
    let mut lines = rows.lines();
    assert_eq!(lines.next(), Some("i,j,x,y,phi_re,phi_im,h_re,h_im"));
    assert_eq!(lines.count(), (nx - 2) * (ny - 2));
}

#[test]
fn minimized_fields_round_trip_and_lower_the_energy() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("min.json");
    let csv = dir.path().join("energy.csv");
    let o = qvk(
        &["minimize", "--grid", "9,9,0.25", "--output", s(&out), "--csv", s(&csv)],
        &[],
    );
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["final_energy"].as_f64().unwrap() <= v["initial_energy"].as_f64().unwrap());
    assert_constants(&v);
    let field = write(&dir, "field.json", &v["field"].to_string());
    let a = report(&qvk(&["analyze", "--input", s(&field), "--nQ", "2,2"], &[]));
    assert_eq!(a["matched_energy"].as_f64(), v["final_energy"].as_f64());
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("iteration,energy\n"));
}

#[test]
fn the_square_root_field_is_monotone_and_certified() {
    let m = report(&qvk(&["monotonicity", "--grid", "33,33,0.0625"], &[]));
    assert_eq!(m["passed"], true);
    assert_constants(&m);
    let c = report(&qvk(&["certificate", "--grid", "33,33,0.0625", "--radii", "0.4,0.2"], &[]));
    for row in c["rows"].as_array().unwrap() {
        assert_eq!(row["bounds_oscillation"], true);
        assert_eq!(row["key_lemma_pass"], true);
    }
    assert_constants(&c);
}

#[test]
fn variations_report_every_trial() {
    let v = report(&qvk(&["variations", "--grid", "17,17,0.125", "--trials", "3", "--seed", "4"], &[]));
    assert_eq!(v["domain"].as_array().unwrap().len(), 3);
    let rel = v["max_relative"].as_f64().unwrap();
    assert_eq!(v["stationary"], rel <= 1e-3);
    assert_constants(&v);
}

#[test]
fn output_does_not_depend_on_the_thread_count() {
    let dir = TempDir::new().unwrap();
    let mut runs = Vec::new();
    for (i, threads) in ["1", "3", "8"].iter().enumerate() {
        let out = dir.path().join(format!("m{i}.json"));
        let csv = dir.path().join(format!("m{i}.csv"));
        let o = qvk(
            &[
                "monotonicity",
                "--grid",
                "21,21,0.1",
                "--base",
                "10,10",
                "--base",
                "8,12",
                "--base",
                "12,9",
                "--output",
                s(&out),
                "--csv",
                s(&csv),
            ],
            &[("QVK_THREADS", threads)],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push((std::fs::read(&out).unwrap(), std::fs::read(&csv).unwrap()));
    }
    let d = qvk(&["monotonicity", "--grid", "21,21,0.1", "--base", "10,10", "--base", "8,12", "--base", "12,9", "--deterministic"], &[]);
    assert_eq!(d.stdout, runs[0].0);
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn bad_thread_caps_and_bases_are_parse_errors() {
    let args = ["certificate", "--grid", "9,9,0.25"];
    assert_eq!(qvk(&args, &[("QVK_THREADS", "0")]).status.code(), Some(2));
    assert_eq!(qvk(&args, &[("QVK_THREADS", "many")]).status.code(), Some(2));
    assert_eq!(qvk(&args, &[("QVK_THREADS", "2")]).status.code(), Some(0));
    let rim = qvk(&["monotonicity", "--grid", "9,9,0.25", "--base", "0,4"], &[]);
    assert_eq!(rim.status.code(), Some(2));
}
