use std::fs;
use std::path::Path;

use hetnet::experiment::config::ConfigError;
use hetnet::experiment::runner::{deployment_study, RunError};
use hetnet::experiment::{run_scenario, Mode, ScenarioConfig, TestcaseOverrides};

fn small(dir: &Path) -> ScenarioConfig {
    let mut c = ScenarioConfig::optimization_preset();
    c.replications = 3;
    c.iterations = 400;
    c.grid_resolution = 20;
    c.out_dir = dir.to_path_buf();
    c
}

fn small_deploy(dir: &Path) -> ScenarioConfig {
    let mut c = ScenarioConfig { replications: 4, user_intensity: 300.0, grid_resolution: 20, ..Default::default() };
    c.out_dir = dir.to_path_buf();
    c
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "svg"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn testcase(number: u8) -> Mode {
    Mode::Testcase { number, variant: None, overrides: TestcaseOverrides::default() }
}

#[test]
fn reruns_are_byte_identical() {
    for (mode, deploy) in [(Mode::Deploy, true), (Mode::Ssa, false), (Mode::Msa, false), (Mode::Compare, false), (testcase(4), false)] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let make = |d: &Path| if deploy { small_deploy(d) } else { small(d) };
        run_scenario(&make(a.path()), &mode).unwrap();
        run_scenario(&make(b.path()), &mode).unwrap();
        let (fa, fb) = (csv_bytes(a.path()), csv_bytes(b.path()));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{mode:?}");
    }
}

#[test]
fn different_seeds_differ() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_scenario(&small(a.path()), &Mode::Ssa).unwrap();
    let mut other = small(b.path());
    other.seed = 99;
    run_scenario(&other, &Mode::Ssa).unwrap();
    assert_ne!(fs::read(a.path().join("metrics.csv")).unwrap(), fs::read(b.path().join("metrics.csv")).unwrap());
}

#[test]
fn summary_echoes_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let report = run_scenario(&cfg, &testcase(3)).unwrap();
    assert!(report.summary.contains(&format!("config_hash: {}", cfg.hash())));
    assert!(report.summary.contains("seed: 1"));
    assert_eq!(fs::read_to_string(dir.path().join("summary.txt")).unwrap(), report.summary);
}

#[test]
fn expected_files_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&small(dir.path()), &Mode::Compare).unwrap();
    for f in ["metrics.csv", "trace.csv", "allocations_dl.csv", "allocations_ul.csv", "coverage_dl.svg", "coverage_ul.svg", "summary.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    // Header plus three schemes per replication.
    assert_eq!(metrics.lines().count(), 1 + 3 * 3);

    let dir = tempfile::tempdir().unwrap();
    run_scenario(&small_deploy(dir.path()), &Mode::Deploy).unwrap();
    for f in ["metrics.csv", "distance_pdf.csv", "associations.csv", "coverage_dl.svg", "coverage_ul.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn testcase_three_log_utility_splits_station_two() {
    let dir = tempfile::tempdir().unwrap();
    let mode = Mode::Testcase {
        number: 3,
        variant: None,
        overrides: TestcaseOverrides { alpha: Some(1.0), ..Default::default() },
    };
    run_scenario(&small(dir.path()), &mode).unwrap();
    for f in ["allocations_dl.csv", "allocations_ul.csv"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
            .collect();
        assert!((rows[1][1] - 0.5).abs() < 1e-3, "{f}: {text}");
        assert!((rows[3][1] - 0.5).abs() < 1e-3, "{f}: {text}");
    }
}

#[test]
fn macro_only_deployment_is_all_case_one() {
    let mut c = ScenarioConfig { replications: 5, user_intensity: 200.0, femto_ratio: 0.0, ..Default::default() };
    c.out_dir = tempfile::tempdir().unwrap().path().to_path_buf();
    let study = deployment_study(&c).unwrap();
    assert_eq!(study.case_frequencies().0[0], 1.0);
}

#[test]
fn empty_deployment_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_deploy(dir.path());
    c.macro_intensity = 0.0;
    assert!(matches!(run_scenario(&c, &Mode::Deploy), Err(RunError::EmptyDeployment(_))));
    let mut c = small(dir.path());
    c.macro_intensity = 0.0;
    assert!(matches!(run_scenario(&c, &Mode::Compare), Err(RunError::EmptyDeployment(_))));
}

#[test]
fn unknown_keys_are_all_listed() {
    let err = ScenarioConfig::parse("seed = 3\nfoo = 1\nalpha = 0.5\nbar = 2\n").unwrap_err();
    match err {
        ConfigError::UnknownKeys(keys) => assert_eq!(keys, vec!["foo", "bar"]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn config_round_trips_through_text() {
    let mut c = ScenarioConfig::optimization_preset();
    c.alpha = 0.123_456_789;
    c.noise_dbm = -101.5;
    let again = ScenarioConfig::parse(&c.serialize()).unwrap();
    assert_eq!(again, c);
    assert_eq!(again.hash(), c.hash());
}

#[test]
fn unknown_testcase_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mode = Mode::Testcase { number: 6, variant: Some("z".into()), overrides: TestcaseOverrides::default() };
    assert!(matches!(run_scenario(&small(dir.path()), &mode), Err(RunError::Testcase(_))));
}
