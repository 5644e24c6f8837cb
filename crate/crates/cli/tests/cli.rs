use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_infocoupling"));
    c.env_remove("INFOCOUPLING_THREADS");
    c
}

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ternary_spectrum() {
    let r = json(&run(&["spectrum", path(&example("ternary_eta02_gamma01.json"))]));
    let s = floats(&r["results"]["singular_values"]);
    for (a, b) in s.iter().zip([1.0, 0.4, 0.14]) {
        assert!((a - b).abs() < 1e-9, "{s:?}");
    }
    assert_eq!(r["command"], "spectrum");
    assert!(r.get("wall_time_s").is_none());
}

#[test]
fn identity_spectrum_and_zero_rate() {
    let id = example("identity2.json");
    let r = json(&run(&["spectrum", path(&id)]));
    assert_eq!(floats(&r["results"]["singular_values"]), vec![1.0, 1.0]);
    let r = json(&run(&["couple", path(&id), "--epsilon", "0"]));
    assert_eq!(r["results"]["rate"]["nats"].as_f64(), Some(0.0));
    assert_eq!(r["results"]["rate"]["bits"].as_f64(), Some(0.0));
}

#[test]
fn malformed_spec_names_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"name\": \"x\",\n  \"input_dist\": [0.5, 0.5,\n}").unwrap();
    let out = run(&["spectrum", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset"));
}

#[test]
fn non_stochastic_spec_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name":"x","input_dist":[0.5,0.5],"channel":[[0.9,0.2],[0.2,0.8]]}"#).unwrap();
    assert_eq!(run(&["spectrum", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn degenerate_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("dead.json");
    std::fs::write(&spec, r#"{"name":"x","input_dist":[0.5,0.5],"channel":[[1,1],[0,0]]}"#).unwrap();
    assert_eq!(run(&["spectrum", spec.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn windmill_broadcast() {
    let out = run(&["couple", "--mode", "broadcast", "--single-direction", path(&example("windmill.json"))]);
    let r = json(&out);
    let res = &r["results"];
    assert!((res["lambda"].as_f64().unwrap() - 0.213333).abs() < 1e-6);
    for w in floats(&res["certificate"]["dual_weights"]) {
        assert!((w - 1.0 / 3.0).abs() < 1e-3);
    }
    assert!(res["single_direction"]["lambda_b"].as_f64().unwrap() <= 0.106667 + 1e-6);
}

#[test]
fn broadcast_with_mismatched_inputs_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    std::fs::write(&a, r#"{"name":"a","input_dist":[0.5,0.5],"channel":[[0.9,0.2],[0.1,0.8]]}"#).unwrap();
    std::fs::write(&b, r#"{"name":"b","input_dist":[0.4,0.6],"channel":[[0.9,0.2],[0.1,0.8]]}"#).unwrap();
    let out = run(&["couple", "--mode", "broadcast", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn adder_mac_gain() {
    let r = json(&run(&["couple", "--mode", "mac", path(&example("adder_mac.json"))]));
    assert!((r["results"]["gain_db"].as_f64().unwrap() - 3.0103).abs() < 1e-3);
    assert!(r["results"]["rate"]["bits"].is_number());
}

#[test]
fn verify_suites() {
    let r = json(&run(&["verify", "--suite", "tensor", "--seed", "42"]));
    assert_eq!(r["results"]["passed"], true);
    assert_eq!(r["seeds"]["verify"], 42);
    let r = json(&run(&["verify", "--suite", "oracle"]));
    assert_eq!(r["results"]["passed"], true);
    let out = run(&["verify", "--suite", "tensor", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("top_singular_triplet"));
}

#[test]
fn layered_plan_and_regime() {
    let r = json(&run(&["layered", "--eta", "0.05", "--gamma", "0.02"]));
    assert!((r["results"]["total_rate"]["nats"].as_f64().unwrap() - 0.00522).abs() < 1e-12);
    assert_eq!(run(&["layered", "--eta", "0.05", "--gamma", "0.05"]).status.code(), Some(4));
    assert_eq!(run(&["layered", "--eta", "0.3", "--gamma", "0.05"]).status.code(), Some(4));
}

#[test]
fn simulation_is_byte_reproducible_across_thread_counts() {
    let args = ["layered", "--eta", "0.2", "--gamma", "0.1", "--simulate", "--trials", "20"];
    let a = run(&args);
    let b = bin().args(args).env("INFOCOUPLING_THREADS", "3").output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let r = json(&a);
    assert_eq!(r["seeds"]["simulation"], 20261018);
    assert_eq!(r["results"]["simulation"]["layers"].as_array().unwrap().len(), 2);
}

#[test]
fn timing_is_opt_in() {
    let r = json(&run(&["--timing", "spectrum", path(&example("identity2.json"))]));
    assert!(r["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn zero_threads_is_rejected() {
    let out = bin().args(["spectrum", path(&example("identity2.json"))]).env("INFOCOUPLING_THREADS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("report.json");
    let spec = example("ternary_eta02_gamma01.json");
    let stdout = run(&["spectrum", path(&spec)]).stdout;
    assert!(run(&["spectrum", path(&spec), "-o", file.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(&file).unwrap(), stdout);
}

#[test]
fn every_shipped_example_runs() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples");
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let spec: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        let mode = if spec.get("joint_channel").is_some() {
            "mac"
        } else if spec.get("receivers").is_some() {
            "broadcast"
        } else {
            "p2p"
        };
        json(&run(&["couple", "--mode", mode, path(&p)]));
    }
}
