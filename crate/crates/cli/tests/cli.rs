use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infodisc"))
        .args(args)
        .env("INFODISC_OUT_DIR", dir.join("out"))
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn assert_schema(v: &Value) {
    let text = include_str!("../schema/report.schema.json");
    let schema: Value = serde_json::from_str(text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema errors: {errors:?}");
}

#[test]
fn disc_xor_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["disc", "--function", "xor", "--n", "1", "--dist", "uniform", "--mode", "exact"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_schema(&v);
    assert_eq!(v["report"]["value"], 0.25);
    assert_eq!(v["seed"], 0);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn gt_table_passes_to_four_bits() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gt-table", "--max-n", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_schema(&v);
    let rows = v["report"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["pass"] == true));
    assert_eq!(rows[0]["value"], 0.5);
}

#[test]
fn violated_bound_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gt-table", "--max-n", "2", "--mode", "sweep", "--constant", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["disc", "--function", "xor", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["disc", "--function", "missing.json"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["verify-all", "--only", "no.such-claim"]).status.code(), Some(2));

    let inst = dir.path().join("extra.json");
    fs::write(
        &inst,
        r#"{"u":1,"p_a":[1],"q_a":[1],"p_b":[1],"q_b":[1],"i":1,"mode":"scaled","c":2,"colour":3}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["sample-verify", "--instance", inst.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn help_is_available_per_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["info", "disc", "gt-table", "sample-verify", "simulate", "verify-all"] {
        let out = run(dir.path(), &[cmd, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("EXAMPLES"), "{cmd}: {text}");
    }
}

#[test]
fn reports_are_written_atomically_and_rows_appended() {
    let dir = tempfile::tempdir().unwrap();
    for _ in 0..2 {
        let out = run(dir.path(), &["disc", "--function", "gt", "--n", "2", "--dist", "gtmu"]);
        assert_eq!(out.status.code(), Some(0));
    }
    let out_dir = dir.path().join("out");
    let names: Vec<String> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.len(), 2, "leftover files: {names:?}");
    let csv = fs::read_to_string(out_dir.join("disc.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("version,seed,config_hash,function,n,dist,mode,value"));
    assert_eq!(lines[1], lines[2]);
    let json: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("disc.json")).unwrap()).unwrap();
    assert_eq!(json["report"]["value"], 0.4375);

    let explicit = dir.path().join("r.csv");
    let out = run(
        dir.path(),
        &["disc", "--function", "gt", "--n", "1", "--format", "csv", "--no-write", "--out", explicit.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(&explicit).unwrap(), out.stdout);
}

#[test]
fn config_hash_tracks_parameters_not_locations() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["disc", "--function", "random", "--n", "3", "--seed", "4"];
    let ha = json_of(&run(a.path(), &args))["config_hash"].clone();
    let hb = json_of(&run(b.path(), &args))["config_hash"].clone();
    assert_eq!(ha, hb);
    let other = json_of(&run(a.path(), &["disc", "--function", "random", "--n", "3", "--seed", "5"]));
    assert_ne!(ha, other["config_hash"]);
}

#[test]
fn verify_all_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["verify-all", "--quick", "--seed", "3", "--no-write"];
    let first = run(dir.path(), &args);
    let second = run(dir.path(), &args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, second.stdout);
    let v = json_of(&first);
    assert_schema(&v);
    assert_eq!(v["report"]["claims"].as_array().unwrap().len(), 11);
    assert!(v["report"]["claims"][0].get("runtime_s").is_none());

    let timed = json_of(&run(dir.path(), &["verify-all", "--quick", "--only", "disc.cc-lower-bound", "--timings", "--no-write"]));
    assert!(timed["report"]["claims"][0]["runtime_s"].is_number());
}

#[test]
fn verify_all_reports_a_tampered_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["verify-all", "--quick", "--only", "disc.gt-bound", "--gt-constant", "0.5", "--no-write"],
    );
    assert_eq!(out.status.code(), Some(1));
    let v = json_of(&out);
    assert_eq!(v["report"]["claims"][0]["id"], "disc.gt-bound");
    assert_eq!(v["report"]["claims"][0]["pass"], false);
}

#[test]
fn info_and_simulate_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["info", "--protocol", "builtin:bisection_gt", "--n", "2", "--dist", "gtmu", "--function", "gt"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_schema(&v);
    assert!((v["report"]["ic"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(v["report"]["error_rate"], 0.0);

    let out = run(
        dir.path(),
        &[
            "simulate", "--protocol", "builtin:send_x", "--function", "random", "--n", "1", "--seed", "1",
            "--mode", "scaled", "--c", "4", "--trials", "2000", "--compress", "twobit:4", "--amplify", "3",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_schema(&v);
    assert_eq!(v["report"]["advantage"]["bits_sent"], 2);
    assert_eq!(v["report"]["amplified"]["total_bits"], 6);

    let out = run(dir.path(), &["simulate", "--protocol", "builtin:send_x", "--function", "xor", "--n", "1", "--mode", "paper"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json_of(&out)["report"]["advantage"].get("empirical").is_none());
}

#[test]
fn sample_verify_reports_exact_and_empirical() {
    let dir = tempfile::tempdir().unwrap();
    let scaled = dir.path().join("s.json");
    fs::write(
        &scaled,
        r#"{"u":2,"p_a":[1,1],"q_a":[0.75,0.25],"p_b":[0.5,0.5],"q_b":[1,1],"i":0.21,"mode":"scaled","c":2,"t":40}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["sample-verify", "--instance", scaled.to_str().unwrap(), "--trials", "20000", "--seed", "2", "--d", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_schema(&v);
    assert_eq!(v["report"]["pass"], true);
    assert_eq!(v["report"]["empirical"]["pi2"]["bits_sent"], 9);

    let paper = dir.path().join("p.json");
    fs::write(
        &paper,
        r#"{"u":2,"p_a":[1,1],"q_a":[0.75,0.25],"p_b":[0.5,0.5],"q_b":[1,1],"i":1,"mode":"paper"}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["sample-verify", "--instance", paper.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["report"]["exact"]["p_success"], "1.0p-100");
    assert!(v["report"]["empirical"].is_null());
}
