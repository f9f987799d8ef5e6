use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> String {
    root()
        .join("fixtures")
        .join(format!("{name}.json"))
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfish-lb"))
        .args(args)
        .output()
        .expect("spawn selfish-lb")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Parses `text` and checks it against the schema named by its `schema` tag.
fn validated(text: &str) -> Value {
    let v: Value = serde_json::from_str(text).unwrap();
    let tag = v["schema"].as_str().expect("schema tag");
    let kind = tag.strip_prefix("selfish-lb.").unwrap();
    validate(&format!("{kind}.json"), &v);
    v
}

fn validate(file: &str, v: &Value) {
    let path = root().join("docs/schemas").join(file);
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let msgs: Vec<String> = match compiled.validate(v) {
        Ok(()) => return,
        Err(errs) => errs.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    panic!("{file}: {}", msgs.join("; "));
}

#[test]
fn fixtures_match_instance_schema() {
    for name in [
        "levels-example",
        "llw-counterexample",
        "waterfill-counterexample",
        "double-before-allocate",
        "double-with-last",
    ] {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
        validate("instance.v1.json", &v);
    }
}

#[test]
fn worked_example_trace() {
    let v = validated(&ok(&["run", "--in", &fixture("levels-example"), "--emit", "trace"]));
    let recs = v["records"].as_array().unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0]["row"], serde_json::json!([[0, "1"]]));
    assert_eq!(recs[1]["row"], serde_json::json!([[0, "4/5"], [1, "1/5"]]));
    assert_eq!(v["final_state"]["lambda"], "1");
}

#[test]
fn summary_and_csv() {
    let v = validated(&ok(&["run", "--in", &fixture("levels-example")]));
    assert_eq!(v["final_lambda"], "1");
    assert_eq!(v["n"], 2);
    let csv = ok(&["run", "--in", &fixture("levels-example"), "--emit", "csv"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "job,machine,fraction,fraction_f64");
    assert_eq!(lines.len(), 4);
}

#[test]
fn lq_inf_matches_makespan() {
    let f = fixture("double-with-last");
    let a = ok(&["run", "--in", &f, "--emit", "trace"]);
    let b = ok(&["run", "--in", &f, "--emit", "trace", "--mechanism", "lq", "--q", "inf"]);
    assert_eq!(a, b);
}

#[test]
fn lq_trace_validates() {
    validated(&ok(&[
        "run",
        "--in",
        &fixture("levels-example"),
        "--emit",
        "trace",
        "--mechanism",
        "lq",
        "--q",
        "2",
    ]));
}

#[test]
fn baseline_outcomes_validate() {
    for mech in ["llw", "waterfill"] {
        let v = validated(&ok(&[
            "run",
            "--in",
            &fixture("levels-example"),
            "--emit",
            "trace",
            "--mechanism",
            mech,
        ]));
        assert_eq!(v["schema"], "selfish-lb.outcome.v1");
    }
}

#[test]
fn rounding_is_seeded() {
    let f = fixture("llw-counterexample");
    let a = ok(&["run", "--in", &f, "--round", "--seed", "7"]);
    let b = ok(&["run", "--in", &f, "--round", "--seed", "7"]);
    assert_eq!(a, b);
    let v = validated(&a);
    assert_eq!(v["rounding"]["seed"], 7);
    let r = validated(&ok(&["round", "--in", &f, "--seed", "7"]));
    assert_eq!(r["assign"], v["rounding"]["assign"]);
}

#[test]
fn payments_validate() {
    let f = fixture("levels-example");
    let v = validated(&ok(&["pay", "--in", &f]));
    assert_eq!(v["mode"], "fractional");
    let v = validated(&ok(&["pay", "--in", &f, "--round", "--seed", "3", "--emit", "trace"]));
    assert_eq!(v["mode"], "realized");
    assert!(v["job_curves"].is_array());
}

#[test]
fn opt_oracles() {
    let f = fixture("levels-example");
    let v = validated(&ok(&["opt", "--in", &f]));
    assert_eq!(v["value"]["exact"], "16/17");
    validated(&ok(&["opt", "--in", &f, "--oracle", "lb"]));
    validated(&ok(&["opt", "--in", &f, "--oracle", "lb", "--q", "2"]));
    validated(&ok(&["opt", "--in", &f, "--q", "1"]));
}

#[test]
fn opt_guard_exits_2() {
    let out = run(&["opt", "--in", &fixture("double-with-last")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn counterexamples() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("llw", "VIOLATION: machine-monotone"),
        ("waterfill", "VIOLATION: machine-monotone"),
        ("variant-c", "VIOLATION: job-monotone"),
        ("variant-d", "VIOLATION: lambda-stability"),
    ];
    for (which, line) in cases {
        let path = dir.path().join(format!("{which}.json"));
        let text = ok(&["counterexample", which, "--out", path.to_str().unwrap()]);
        assert!(text.contains(line), "{which}: {text}");
        let v = validated(&std::fs::read_to_string(&path).unwrap());
        assert_eq!(v["violations"].as_array().unwrap().len(), 1);
    }
    let text = ok(&["counterexample", "variant-d"]);
    assert!(text.contains("Λ=4") && text.contains("Λ'=1"), "{text}");
}

#[test]
fn clean_fuzz_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let text = ok(&[
        "test-monotone",
        "--trials",
        "20",
        "--m",
        "1..6",
        "--n",
        "1..12",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(text.contains("0 violations"), "{text}");
    let v = validated(&std::fs::read_to_string(&path).unwrap());
    assert_eq!(v["trials"], 20);
}

#[test]
fn violating_fuzz_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = run(&[
        "test-lambda",
        "--in",
        &fixture("double-with-last"),
        "--mechanism",
        "variant-d",
        "--shrink",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = validated(&std::fs::read_to_string(&path).unwrap());
    assert!(v["violations"][0]["minimized"].is_object());
}

#[test]
fn bench_csv_rows() {
    let csv = ok(&[
        "bench", "--m", "8", "--n", "40", "--trials", "50", "--oracle", "lb", "--emit", "csv",
    ]);
    let mut r = csv::Reader::from_reader(csv.as_bytes());
    let ratio = r
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "ratio")
        .expect("ratio column");
    let rows: Vec<_> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 50);
    for row in &rows {
        assert!(row[ratio].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn bench_json_validates() {
    let v = validated(&ok(&[
        "bench",
        "--m",
        "1..3",
        "--n",
        "1..5",
        "--trials",
        "5",
        "--oracle",
        "bruteforce",
        "--rounds",
        "10",
        "--emit",
        "json",
    ]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 5);
}

#[test]
fn usage_and_input_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["run", "--in", "/nonexistent.json"]).status.code(), Some(2));
    assert_eq!(
        run(&["run", "--in", &fixture("levels-example"), "--mechanism", "lq"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["run", "--in", &fixture("levels-example"), "--q", "2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["pay", "--in", &fixture("levels-example"), "--mechanism", "llw"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn schemas_reject_float_rationals() {
    let mut v = validated(&ok(&["run", "--in", &fixture("levels-example")]));
    v["final_lambda"] = serde_json::json!(1.0);
    let path = root().join("docs/schemas/summary.v1.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(!jsonschema::JSONSchema::compile(&schema).unwrap().is_valid(&v));
}
