use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn metassign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metassign"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn smoke_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs/smoke.toml")
        .to_string_lossy()
        .into_owned()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = metassign(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = metassign(&["selftest", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn meta_test_requires_a_checkpoint() {
    let out = metassign(&["meta-test", "--dataset", "d.bin", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--checkpoint"));
}

#[test]
fn selftest_passes() {
    let out = metassign(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().count() >= 5);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn runtime_errors_print_one_prefixed_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let out = metassign(&[
        "meta-test",
        "--dataset",
        missing.to_str().unwrap(),
        "--checkpoint",
        "c.bin",
        "--out",
        "r.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    let last = err.lines().last().unwrap();
    assert!(last.starts_with("error[io]: "), "{err}");

    let bad_config = dir.path().join("bad.toml");
    std::fs::write(&bad_config, "[meta]\nalfa = 1\n").unwrap();
    let out = metassign(&["--config", bad_config.to_str().unwrap(), "selftest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error[config]: "));
}

#[test]
fn assign_writes_flows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(metassign(&["synth", "--out-dir", d, "--nodes", "6", "--edges", "14"]).status.success());
    let flows = dir.path().join("flows.csv");
    let out = metassign(&[
        "assign",
        "--net",
        &format!("{d}/net.tntp"),
        "--trips",
        &format!("{d}/trips.tntp"),
        "--method",
        "bfw",
        "--out",
        flows.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(flows).unwrap();
    assert_eq!(csv.lines().next(), Some("edge_id,from,to,flow,cost,gap"));
    assert_eq!(csv.lines().count(), 15);

    let mask = dir.path().join("mask.txt");
    let flags: Vec<&str> = (0..14).map(|e| if e == 13 { "0" } else { "1" }).collect();
    std::fs::write(&mask, flags.join("\n")).unwrap();
    let out = metassign(&[
        "assign",
        "--net",
        &format!("{d}/net.tntp"),
        "--trips",
        &format!("{d}/trips.tntp"),
        "--mask",
        mask.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let closed_row = stdout.lines().find(|l| l.starts_with("13,")).unwrap();
    assert_eq!(closed_row.split(',').nth(3), Some("0"));
}

#[test]
fn end_to_end_smoke_run() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let cfg = smoke_config();
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--out-dir".into(), p("net")],
        vec![
            "generate".into(),
            "--net".into(),
            p("net/net.tntp"),
            "--trips".into(),
            p("net/trips.tntp"),
            "--nodes".into(),
            p("net/nodes.tntp"),
            "--out".into(),
            p("dataset.bin"),
        ],
        vec!["meta-train".into(), "--data".into(), p("dataset.bin"), "--out".into(), p("model.bin")],
        vec![
            "meta-test".into(),
            "--dataset".into(),
            p("dataset.bin"),
            "--checkpoint".into(),
            p("model.bin"),
            "--out".into(),
            p("report.json"),
        ],
        vec![
            "report".into(),
            "--report".into(),
            p("report.json"),
            "--history".into(),
            p("model.bin.history.csv"),
            "--out-dir".into(),
            p("report"),
        ],
    ];
    for step in &steps {
        let mut args: Vec<&str> = vec!["--config", &cfg, "--seed", "3"];
        args.extend(step.iter().map(String::as_str));
        let out = metassign(&args);
        assert!(out.status.success(), "{step:?}: {}", stderr(&out));
    }
    let history = std::fs::read_to_string(p("model.bin.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 51);
    let summary = std::fs::read_to_string(p("report/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(Path::new(&p("report/meta_loss.svg")).exists());
    assert!(start.elapsed() < Duration::from_secs(600));
}
