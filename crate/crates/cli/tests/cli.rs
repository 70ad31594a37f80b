use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn covlmi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covlmi")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn no_panic(o: &Output) {
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(!err.contains("panicked"), "{err}");
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("gamma2_noisy.json");
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = covlmi(&[
            "simulate", "--config", s(&cfg), "--horizon", "30", "--trials", "1000", "--seed", "42", "--out", s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read(out.join("sim.csv")).unwrap());
        files.push(std::fs::read(out.join("summary.csv")).unwrap());
    }
    assert_eq!(files[0], files[2]);
    assert_eq!(files[1], files[3]);
}

#[test]
fn baseline_sweep_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let o = covlmi(&[
        "sweep",
        "--config",
        s(&fixture("gamma2.json")),
        "--method",
        "baseline",
        "--grid",
        "0.14:0.01:0.18",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("0.16,feasible,")), "{csv}");
    assert!(csv.lines().any(|l| l.starts_with("0.17,infeasible,")), "{csv}");
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.contains("sigma_max,0.16\n"), "{summary}");
}

#[test]
fn infeasible_synthesis_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = covlmi(&["synth", "--config", s(&fixture("gamma1.json")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("gain.json").exists());
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.contains("status,infeasible"));
}

#[test]
fn synthesized_gain_feeds_verify_and_warm_start() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("gamma2.json");
    let o = covlmi(&["synth", "--config", s(&cfg), "--method", "baseline", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let gain = dir.path().join("gain.json");
    let o = covlmi(&["verify", "--config", s(&cfg), "--gain", s(&gain), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let warm = format!("guess={}", s(&gain));
    let o = covlmi(&["synth", "--config", s(&cfg), "--n0", &warm, "--out", s(&dir.path().join("w"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = covlmi(&["export-sdpa", "--config", s(&fixture("gamma2.json")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("problem.dat-s")).unwrap();
    let back = covlmi::sdp::read_sdpa(&text).unwrap();
    assert_eq!(covlmi::sdp::write_sdpa(&back), text);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.contains("round_trip,true"));
}

#[test]
fn bad_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let ragged = dir.path().join("ragged.json");
    std::fs::write(&bad, "{ not json").unwrap();
    std::fs::write(
        &ragged,
        r#"{"vertices":[{"A":[[1,2],[3]],"B":[[1],[0]]}],"uncertainty":{"kind":"iid_normal_entries","sigma2":0.1}}"#,
    )
    .unwrap();
    let out = s(dir.path());
    let g2 = fixture("gamma2.json");
    let g2 = s(&g2);
    let cases: Vec<Vec<&str>> = vec![
        vec!["synth", "--config", "/does/not/exist.json", "--out", out],
        vec!["synth", "--config", s(&bad), "--out", out],
        vec!["synth", "--config", s(&ragged), "--out", out],
        vec!["synth", "--config", g2, "--method", "nope"],
        vec!["synth", "--config", g2, "--n0", "guess=", "--out", out],
        vec!["sweep", "--config", g2, "--grid", "0.3:0.1:0.1", "--out", out],
        vec!["verify", "--config", g2, "--gain", s(&bad), "--out", out],
        vec!["simulate", "--config", g2, "--trials", "0", "--out", out],
        vec!["timing", "--sizes", "0", "--out", out],
        vec!["no-such-command"],
    ];
    for args in cases {
        let o = covlmi(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        no_panic(&o);
    }
    let ragged_err = String::from_utf8_lossy(&covlmi(&["synth", "--config", s(&ragged)]).stderr).into_owned();
    assert!(ragged_err.contains("vertices[0].A[1]"), "{ragged_err}");
}

#[test]
fn bench_writes_junit() {
    let dir = tempfile::tempdir().unwrap();
    let o = covlmi(&["bench", "--filter", "polytopic", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let xml = std::fs::read_to_string(dir.path().join("junit.xml")).unwrap();
    assert!(xml.contains("<testsuite") && xml.contains("polytopic-example"));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
