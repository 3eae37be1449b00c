use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cinetrack(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cinetrack")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\nstderr: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

const SMALL: &[&str] = &["--size", "32", "--frames", "8", "--r-inner", "5", "--r-outer", "9"];

fn small_phantom(dir: &Path) {
    let mut args = vec!["phantom", "--out", "ph"];
    args.extend_from_slice(SMALL);
    ok(&cinetrack(&args, dir));
}

#[test]
fn full_pipeline_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_phantom(d);
    for f in ["cine.cseq", "truth.dsp1", "myo.msk1", "truth_strain.csv", "endo.csv", "endo_es.csv"] {
        assert!(d.join("ph").join(f).is_file(), "{f} missing");
    }
    ok(&cinetrack(&["register", "--in", "ph/cine.cseq", "--metric", "llr", "--out", "run", "--levels", "2"], d));
    ok(&cinetrack(
        &[
            "strain",
            "--in",
            "ph/cine.cseq",
            "--disp",
            "run/trajectory.dsp1",
            "--mask",
            "ph/myo.msk1",
            "--out",
            "run/strain.csv",
            "--segments",
            "6",
            "--ref-angle",
            "1.5708",
        ],
        d,
    ));
    let strain = fs::read_to_string(d.join("run/strain.csv")).unwrap();
    assert_eq!(strain.lines().count(), 1 + 8);
    assert!(strain.starts_with("frame,GRS,GCS,seg_1"));
    ok(&cinetrack(
        &[
            "track",
            "--contour",
            "ph/endo.csv",
            "--disp",
            "run/trajectory.dsp1",
            "--frame",
            "5",
            "--out",
            "run/endo5.csv",
        ],
        d,
    ));
    let out = cinetrack(
        &[
            "evaluate",
            "--est",
            "run/trajectory.dsp1",
            "--truth",
            "ph/truth.dsp1",
            "--mask",
            "ph/myo.msk1",
            "--est-strain",
            "run/strain.csv",
            "--truth-strain",
            "ph/truth_strain.csv",
            "--tracked-contour",
            "run/endo5.csv",
            "--reference-contour",
            "ph/endo_es.csv",
            "--out",
            "run/report.csv",
        ],
        d,
    );
    ok(&out);
    let report = fs::read_to_string(d.join("run/report.csv")).unwrap();
    assert!(report.starts_with("metric,value"));
    assert!(report.contains("epe_all_px,") && report.contains("contour_tracked_mm,"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("epe_es_mm"));
}

#[test]
fn pairwise_writes_steps_and_pair_column() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_phantom(d);
    ok(&cinetrack(&["register", "--in", "ph/cine.cseq", "--metric", "pairwise", "--out", "pw", "--levels", "2"], d));
    let steps = fs::metadata(d.join("pw/steps.dsp1")).unwrap().len();
    assert_eq!(steps, 20 + 8 * 32 * 32 * 7);
    let trace = fs::read_to_string(d.join("pw/trace.csv")).unwrap();
    assert!(trace.lines().next().unwrap().ends_with(",pair"));
}

#[test]
fn missing_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cinetrack(&["register", "--metric", "llr", "--in", "absent.cseq", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let garbage = tmp.path().join("bad.cseq");
    fs::write(&garbage, b"NOPE0000").unwrap();
    let out = cinetrack(&["register", "--in", "bad.cseq", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cinetrack(&["register", "--bogus"], tmp.path()).status.code(), Some(1));
    assert_eq!(cinetrack(&["frobnicate"], tmp.path()).status.code(), Some(1));
    small_phantom(tmp.path());
    let out = cinetrack(&["register", "--in", "ph/cine.cseq", "--metric", "ncc", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(cinetrack(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_phantom(d);
    for run in ["a", "b"] {
        ok(&cinetrack(
            &[
                "--deterministic",
                "register",
                "--in",
                "ph/cine.cseq",
                "--metric",
                "llr",
                "--out",
                run,
                "--levels",
                "2",
                "--seed",
                "42",
            ],
            d,
        ));
    }
    for f in ["trajectory.dsp1", "displacement.dsp1", "trace.csv"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_phantom(d);
    fs::write(d.join("run.toml"), "metric = \"glr\"\nlevels = 1\ninput = \"ph/cine.cseq\"\n").unwrap();
    ok(&cinetrack(&["--config", "run.toml", "register", "--out", "cfg"], d));
    ok(&cinetrack(&["--config", "run.toml", "register", "--out", "flag", "--levels", "2"], d));
    let levels = |dir: &str| {
        let trace = fs::read_to_string(d.join(dir).join("trace.csv")).unwrap();
        let mut l: Vec<String> = trace.lines().skip(1).map(|r| r.split(',').next().unwrap().to_string()).collect();
        l.dedup();
        l
    };
    assert_eq!(levels("cfg"), vec!["0"]);
    assert_eq!(levels("flag"), vec!["0", "1"]);
    fs::write(d.join("broken.toml"), "levels = \"three\"\n").unwrap();
    assert_eq!(cinetrack(&["--config", "broken.toml", "register", "--out", "x"], d).status.code(), Some(2));
}
