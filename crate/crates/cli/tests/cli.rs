use std::path::PathBuf;
use std::process::{Command, Output};

use fracheat_cli::{RunRecord, RunResult};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fracheat"));
    c.env_remove("FRACHEAT_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn record(out: &Output) -> RunRecord {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is a record")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn skorohod_first_moment_of_unit_data() {
    let r = record(&run(&["moment", "--flavor", "sko", "--p", "1", "--u0", "const:1", "--samples", "50"]));
    match r.result {
        RunResult::Moment { estimate } => {
            assert_eq!(estimate.value, 1.0);
            assert_eq!(estimate.std_error, 0.0);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn regime_violations_exit_with_3() {
    let out = run(&["moment", "--flavor", "sko", "--p", "2", "--alpha", "0.5", "--d", "3"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d < 2 + alpha"));
    let out = run(&["moment", "--flavor", "strat", "--d", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d = 1"));
}

#[test]
fn config_errors_exit_with_2() {
    assert_eq!(run(&["moment", "--d", "2", "--x", "0.5"]).status.code(), Some(2));
    assert_eq!(run(&["moment", "--alpha", "2.5"]).status.code(), Some(2));
    let cfg = scratch("bad.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "check"]).status.code(), Some(2));
}

#[test]
fn check_reports_existence() {
    let r = record(&run(&["check", "--alpha", "2", "--d", "3"]));
    match r.result {
        RunResult::Check { report } => assert!(report.exists),
        other => panic!("{other:?}"),
    }
    let r = record(&run(&["check", "--alpha", "1", "--d", "3"]));
    assert!(matches!(r.result, RunResult::Check { report } if !report.exists));
}

#[test]
fn chaos_first_terms() {
    let r = record(&run(&["chaos", "--alpha", "2", "--d", "1", "--t", "1", "--nmax", "1"]));
    match r.result {
        RunResult::Chaos { series } => {
            assert_eq!(series.terms.len(), 2);
            assert_eq!(series.terms[0].value, 1.0);
            assert!((series.terms[1].value - 0.3761263).abs() < 1e-3);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn file_values_are_overridden_by_flags_and_rerun_is_exact() {
    let cfg = scratch("moment.cfg");
    std::fs::write(&cfg, "flavor = strat\np = 2\nsamples = 200\nsteps = 16\nseed = 5\nalpha = 1.5\n").unwrap();
    let out_path = scratch("moment.json");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "-o",
        out_path.to_str().unwrap(),
        "moment",
        "--alpha",
        "1.2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let first: RunRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(first.config.alpha, 1.2);
    assert_eq!(first.config.seed, 5);
    assert_eq!(first.config.p, 2);
    assert!(first.wall_time_s.is_none());
    let again = run(&["--workers", "2", "rerun", out_path.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(String::from_utf8_lossy(&again.stdout).trim_end(), text.trim_end());
}

#[test]
fn seed_falls_back_to_environment() {
    let out = bin().args(["moment", "--samples", "10", "--steps", "4"]).env("FRACHEAT_SEED", "123").output().unwrap();
    assert_eq!(record(&out).config.seed, 123);
    let out = bin()
        .args(["moment", "--samples", "10", "--steps", "4", "--seed", "7"])
        .env("FRACHEAT_SEED", "123")
        .output()
        .unwrap();
    assert_eq!(record(&out).config.seed, 7);
}

#[test]
fn csv_exports() {
    let samples = scratch("samples.csv");
    let path = scratch("path.csv");
    let r = record(&run(&[
        "moment",
        "--flavor",
        "strat",
        "--p",
        "2",
        "--samples",
        "20",
        "--steps",
        "8",
        "--samples-csv",
        samples.to_str().unwrap(),
        "--path-csv",
        path.to_str().unwrap(),
    ]));
    assert!(matches!(r.result, RunResult::Moment { .. }));
    let s = std::fs::read_to_string(&samples).unwrap();
    assert!(s.starts_with("sample,u0_product,self_sum,cross_sum,weight"));
    assert_eq!(s.lines().count(), 21);
    let p = std::fs::read_to_string(&path).unwrap();
    assert_eq!(p.lines().count(), 10);

    let prefix = scratch("field");
    let r = record(&run(&[
        "solve",
        "--t",
        "0.5",
        "--nspace",
        "16",
        "--ntime",
        "8",
        "--realizations",
        "10",
        "--snapshot-prefix",
        prefix.to_str().unwrap(),
        "--snapshot-times",
        "0.25,0.5",
    ]));
    assert!(matches!(r.result, RunResult::Solve { boundary_mass, .. } if boundary_mass < 1e-6));
    for t in ["0.250000", "0.500000"] {
        let f = std::fs::read_to_string(format!("{}_t{t}.csv", prefix.display())).unwrap();
        assert!(f.starts_with("x,u"));
        assert_eq!(f.lines().count(), 17);
    }
}

#[test]
fn timing_is_opt_in() {
    let r = record(&run(&["--timing", "check"]));
    assert!(r.wall_time_s.is_some());
}
