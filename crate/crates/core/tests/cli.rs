use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_regime-causal");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .parse()
        .unwrap()
}

#[test]
fn gen_run_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, "# small stream\nd = 3\nsegment_len = 200\nsequence = 1,2,1\nseed = 4\n").unwrap();

    let o = run(&["gen", "--config", s(&cfg), "--out", s(&data)]);
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,x3"));
    assert_eq!(csv.lines().count(), 601);
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("data.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["seed"], 4);
    assert_eq!(truth["segments"].as_array().unwrap().len(), 3);

    let out = dir.path().join("run");
    let o = run(&["run", "--config", s(&cfg), "--input", s(&dir.path().join("data.csv")), "--out", s(&out)]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(value(&stdout(&o), "ticks"), 600.0);
    let steps = fs::read_to_string(dir.path().join("run.steps.jsonl")).unwrap();
    assert_eq!(steps.lines().count(), 600 - 49);
    let first: serde_json::Value = serde_json::from_str(steps.lines().next().unwrap()).unwrap();
    assert_eq!(first["t"], 50);
    assert_eq!(first["created"], true);
    assert_eq!(first["forecast"].as_array().unwrap().len(), 3);
    let regimes = fs::read_to_string(dir.path().join("run.regimes.jsonl")).unwrap();
    let r0: serde_json::Value = serde_json::from_str(regimes.lines().next().unwrap()).unwrap();
    assert_eq!(r0["w"].as_array().unwrap().len(), 3);
    assert_eq!(fs::read_to_string(dir.path().join("run.causal.jsonl")).unwrap().lines().count(), (600 - 50) / 25 + 1);

    let o = run(&[
        "eval",
        "--truth",
        s(&dir.path().join("data.truth.json")),
        "--run",
        s(&out),
        "--data",
        s(&dir.path().join("data.csv")),
    ]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    let shd = value(&text, "shd");
    assert!((0.0..=3.0).contains(&shd));
    assert!(value(&text, "rmse") >= value(&text, "mae"));
    assert_eq!(value(&text, "forecast_samples"), (600 - 49 - 5) as f64);
}

#[test]
fn static_baseline_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert!(run(&["gen", "--out", s(&data), "--d", "3", "--segment_len", "300", "--sequence", "1"]).status.success());
    let out = dir.path().join("b");
    let o = run(&["run", "--input", s(&dir.path().join("d.csv")), "--out", s(&out), "--baseline-static"]);
    assert!(o.status.success(), "{o:?}");
    let causal = fs::read_to_string(dir.path().join("b.causal.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = causal.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), (300 - 50) / 25 + 1);
    assert!(lines.windows(2).all(|w| w[0]["b"] == w[1]["b"]));
}

#[test]
fn usage_and_input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["gen", "--out", s(&dir.path().join("x")), "--nonsense", "1"]).status.code(), Some(2));
    assert_eq!(run(&["gen", "--out", s(&dir.path().join("x")), "--h", "0"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "--length", "100"]).status.code(), Some(2));

    let bad_cfg = dir.path().join("bad.cfg");
    fs::write(&bad_cfg, "window = 3\n").unwrap();
    assert_eq!(run(&["gen", "--out", s(&dir.path().join("x")), "--config", s(&bad_cfg)]).status.code(), Some(2));

    let missing = dir.path().join("no/such/dir/x");
    assert_eq!(run(&["gen", "--out", s(&missing)]).status.code(), Some(2));
    assert!(!dir.path().join("no").exists());

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "t,x1,x2\n").unwrap();
    assert_eq!(run(&["run", "--input", s(&empty), "--out", s(&dir.path().join("r"))]).status.code(), Some(2));
    assert_eq!(run(&["run", "--input", s(&dir.path().join("absent.csv")), "--out", s(&dir.path().join("r"))]).status.code(), Some(2));
}

#[test]
fn malformed_rows_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert!(run(&["gen", "--out", s(&data), "--d", "2", "--segment_len", "300", "--sequence", "1"]).status.success());
    let csv_path = dir.path().join("d.csv");
    let mut lines: Vec<String> = fs::read_to_string(&csv_path).unwrap().lines().map(String::from).collect();
    lines[100] = "100,abc,1.0".into();
    lines[200] = "200,1.0".into();
    lines[250] = "250,NaN,1.0".into();
    fs::write(&csv_path, lines.join("\n")).unwrap();
    let o = run(&["run", "--input", s(&csv_path), "--out", s(&dir.path().join("r")), "--tau_unit", "1e9"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(value(&stdout(&o), "skipped"), 3.0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipping line"));
}

#[test]
fn eval_rejects_misaligned_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["gen", "--out", s(&a), "--d", "2", "--segment_len", "200", "--sequence", "1"]).status.success());
    assert!(run(&["gen", "--out", s(&b), "--d", "2", "--segment_len", "300", "--sequence", "1"]).status.success());
    let r = dir.path().join("r");
    assert!(run(&["run", "--input", s(&dir.path().join("b.csv")), "--out", s(&r), "--tau_unit", "1e9"]).status.success());
    let o = run(&["eval", "--truth", s(&dir.path().join("a.truth.json")), "--run", s(&r), "--data", s(&dir.path().join("b.csv"))]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}
