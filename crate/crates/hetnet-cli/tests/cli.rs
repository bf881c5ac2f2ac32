use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hetnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetnet")).args(args).output().expect("binary runs")
}

fn out_dir(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = hetnet(&["compare", "--replications", "2", "--iterations", "300", "--seed", "5", "--out-dir", &out_dir(dir.path())]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["metrics.csv", "allocations_dl.csv", "allocations_ul.csv", "trace.csv", "summary.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unknown_config_keys_fail_and_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 2\nfoo = 1\nbar = 2\n").unwrap();
    let out = hetnet(&["deploy", "--config", cfg.to_str().unwrap(), "--out-dir", &out_dir(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("foo") && err.contains("bar"), "{err}");
}

#[test]
fn testcase_three_with_log_utility() {
    let dir = tempfile::tempdir().unwrap();
    let out = hetnet(&["testcase", "3", "--alpha", "1", "--out-dir", &out_dir(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("allocations_dl.csv")).unwrap();
    let row = |u: usize| -> f64 { text.lines().nth(u + 1).unwrap().split(',').nth(2).unwrap().parse().unwrap() };
    assert!((row(1) - 0.5).abs() < 1e-3 && (row(3) - 0.5).abs() < 1e-3, "{text}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("mode: testcase"));
}

#[test]
fn out_of_range_testcase_is_rejected() {
    assert!(!hetnet(&["testcase", "7"]).status.success());
}
