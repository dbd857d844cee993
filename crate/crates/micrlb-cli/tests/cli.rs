//! End-to-end runs of the compiled binary: subcommand plumbing, exit
//! codes, file outputs, and determinism. Everything here uses tiny
//! scenarios; the full-size preset runs live in the acceptance suite.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_micrlb"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary should spawn")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

/// A small helix scenario every test here can afford.
const TINY: &str = "scenario.anchor_placement = helix\nscenario.thing_count = 2\n";

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"][..], &["crlb", "--help"][..]] {
        let out = bin().args(args).output().unwrap();
        assert_eq!(code(&out), 0, "{args:?}");
    }
}

#[test]
fn unknown_flags_exit_one() {
    let out = bin().arg("--bogus").output().unwrap();
    assert_eq!(code(&out), 1);
    let out = bin().args(["crlb"]).output().unwrap();
    assert_eq!(code(&out), 1, "crlb without --scene is a usage error");
}

#[test]
fn generate_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();

    for name in ["a.txt", "b.txt"] {
        let out = run_in(
            dir.path(),
            &["generate", "--config", "tiny.cfg", "--seed", "9", "--out", name],
        );
        assert_eq!(code(&out), 0, "{}", stderr_of(&out));
        assert!(stdout_of(&out).contains("2 things"));
    }
    let a = fs::read(dir.path().join("a.txt")).unwrap();
    let b = fs::read(dir.path().join("b.txt")).unwrap();
    assert_eq!(a, b);

    let out = run_in(
        dir.path(),
        &["generate", "--config", "tiny.cfg", "--seed", "10", "--out", "c.txt"],
    );
    assert_eq!(code(&out), 0);
    assert_ne!(a, fs::read(dir.path().join("c.txt")).unwrap());
}

#[test]
fn generate_defaults_describe_the_full_network() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["generate", "--out", "scene.txt"]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("3 anchors, 60 things, 180 edges"));
    let scene = fs::read_to_string(dir.path().join("scene.txt")).unwrap();
    assert!(scene.starts_with("# anchors 3\n# things 60\n"));
}

#[test]
fn crlb_reports_a_singular_well_line_scene_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("flat.cfg"), "scenario.thing_count = 2\n").unwrap();
    let out = run_in(
        dir.path(),
        &["generate", "--config", "flat.cfg", "--out", "scene.txt"],
    );
    assert_eq!(code(&out), 0);

    let out = run_in(dir.path(), &["crlb", "--scene", "scene.txt"]);
    assert_eq!(code(&out), 0, "singularity is a report, not a failure");
    let text = stdout_of(&out);
    assert!(text.contains("singular = true"), "{text}");
    assert!(text.contains("aggregate = inf"), "{text}");

    // The pseudo-inverse turns the same report finite.
    let out = run_in(dir.path(), &["crlb", "--scene", "scene.txt", "--pseudo-inverse"]);
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.contains("singular = true"), "{text}");
    assert!(!text.contains("aggregate = inf"), "{text}");
}

#[test]
fn crlb_helix_scene_is_finite_and_oracle_agrees() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    let out = run_in(
        dir.path(),
        &["generate", "--config", "tiny.cfg", "--seed", "3", "--out", "scene.txt"],
    );
    assert_eq!(code(&out), 0);

    let grab = |text: &str, key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap_or_else(|| panic!("no {key} in {text}"))
            .trim_start_matches(" = ")
            .parse()
            .unwrap()
    };

    let out = run_in(dir.path(), &["crlb", "--scene", "scene.txt"]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("singular = false"), "{text}");
    let standard = grab(&text, "aggregate");

    let out = run_in(
        dir.path(),
        &["crlb", "--scene", "scene.txt", "--fim-mode", "oracle-mc", "--samples", "40000"],
    );
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let text = stdout_of(&out);
    let oracle = grab(&text, "aggregate");
    assert!(grab(&text, "max_entry_se") > 0.0);
    assert!(
        ((oracle - standard) / standard).abs() < 0.05,
        "oracle {oracle} vs standard {standard}"
    );
}

#[test]
fn crlb_compare_modes_quantifies_the_transcription_gap() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    run_in(dir.path(), &["generate", "--config", "tiny.cfg", "--out", "scene.txt"]);

    let out = run_in(
        dir.path(),
        &["crlb", "--scene", "scene.txt", "--fim-mode", "paper", "--compare-modes"],
    );
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("mode = paper"), "{text}");
    let gap: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("compare.rel_frobenius_gap = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(gap > 1e3, "transcribed matrix should be far from the canonical one, gap {gap}");
    let negatives: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("compare.paper_negative_diagonals = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(negatives > 0);
}

#[test]
fn crlb_writes_the_dense_matrix_on_request() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    run_in(dir.path(), &["generate", "--config", "tiny.cfg", "--out", "scene.txt"]);

    let out = run_in(
        dir.path(),
        &["crlb", "--scene", "scene.txt", "--fim-out", "fim.txt"],
    );
    assert_eq!(code(&out), 0);
    let dump = fs::read_to_string(dir.path().join("fim.txt")).unwrap();
    let rows: Vec<&str> = dump.lines().collect();
    assert_eq!(rows.len(), 6, "3N rows for N = 2");
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 6));
}

#[test]
fn sweep_writes_stable_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{TINY}sweep.values = 0.1 0.3 0.5\nsweep.trials = 10\n\
         output.csv = out.csv\noutput.plot = out.svg\n"
    );
    fs::write(dir.path().join("s.cfg"), &cfg).unwrap();

    let out = run_in(dir.path(), &["sweep", "--config", "s.cfg"]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    let csv1 = fs::read(dir.path().join("out.csv")).unwrap();
    let svg1 = fs::read(dir.path().join("out.svg")).unwrap();

    let text = String::from_utf8(csv1.clone()).unwrap();
    assert!(text.starts_with("param,mean_crlb,std_crlb,trials,singular,status\n"));
    assert_eq!(text.lines().count(), 4);

    let out = run_in(dir.path(), &["sweep", "--config", "s.cfg"]);
    assert_eq!(code(&out), 0);
    assert_eq!(csv1, fs::read(dir.path().join("out.csv")).unwrap());
    assert_eq!(svg1, fs::read(dir.path().join("out.svg")).unwrap());
}

#[test]
fn sweep_without_output_path_prints_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{TINY}sweep.values = 0.1 0.2\nsweep.trials = 5\n");
    fs::write(dir.path().join("s.cfg"), &cfg).unwrap();
    let out = run_in(dir.path(), &["sweep", "--config", "s.cfg"]);
    assert_eq!(code(&out), 0);
    assert!(stdout_of(&out).starts_with("param,mean_crlb,std_crlb,trials,singular,status\n"));
}

#[test]
fn thread_count_never_changes_the_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{TINY}sweep.values = 0.1 0.4\nsweep.trials = 20\noutput.csv = out.csv\n"
    );
    fs::write(dir.path().join("s.cfg"), &cfg).unwrap();

    let out = run_in(dir.path(), &["--threads", "1", "sweep", "--config", "s.cfg"]);
    assert_eq!(code(&out), 0);
    let single = fs::read(dir.path().join("out.csv")).unwrap();

    let out = bin()
        .current_dir(dir.path())
        .env("MICRLB_THREADS", "4")
        .args(["sweep", "--config", "s.cfg"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(single, fs::read(dir.path().join("out.csv")).unwrap());
}

#[test]
fn efficiency_smoke_respects_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "scenario.anchors = 0 0 1796; 8 0 1796.5; 0 8 1797; 8 8 1797.5; 4 0 1798; 0 4 1798.5\n\
               scenario.thing_count = 2\n\
               estimator.sigmas = 0.01\n\
               estimator.starts = 4\n\
               output.csv = eff.csv\n";
    fs::write(dir.path().join("e.cfg"), cfg).unwrap();

    let out = run_in(dir.path(), &["efficiency", "--config", "e.cfg", "--trials", "5"]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("bound respected"));
    let csv = fs::read_to_string(dir.path().join("eff.csv")).unwrap();
    assert!(csv.starts_with("sigma,rmse,sqrt_crlb,rmse_se,trials\n"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn config_defaults_print_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["config", "--defaults"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.contains("scenario.thing_count = 60"), "{text}");
    assert!(text.contains("noise.mode = ranging"));

    // The printed defaults must be a valid configuration file.
    fs::write(dir.path().join("d.cfg"), &text).unwrap();
    let out = run_in(
        dir.path(),
        &["generate", "--config", "d.cfg", "--out", "scene.txt"],
    );
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));

    let out = bin().args(["config"]).output().unwrap();
    assert_eq!(code(&out), 1, "config without --defaults has nothing to do");
}

#[test]
fn usage_errors_exit_one_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();

    let out = run_in(dir.path(), &["sweep", "--config", "missing.cfg"]);
    assert_eq!(code(&out), 1);
    assert!(stderr_of(&out).contains("missing.cfg"));

    fs::write(dir.path().join("bad.cfg"), "scenario.wat = 1\n").unwrap();
    let out = run_in(dir.path(), &["sweep", "--config", "bad.cfg"]);
    assert_eq!(code(&out), 1);
    let err = stderr_of(&out);
    assert!(err.contains("wat") && err.contains("line 1"), "{err}");

    fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    run_in(dir.path(), &["generate", "--config", "tiny.cfg", "--out", "scene.txt"]);
    let out = run_in(dir.path(), &["crlb", "--scene", "scene.txt", "--fim-mode", "sideways"]);
    assert_eq!(code(&out), 1);
    assert!(stderr_of(&out).contains("sideways"));
}

#[test]
fn computation_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    // 0.9 m of ranging noise is outside the tabulated sweep range.
    let cfg = format!("{TINY}sweep.values = 0.9\nsweep.trials = 2\n");
    fs::write(dir.path().join("oor.cfg"), &cfg).unwrap();
    let out = run_in(dir.path(), &["sweep", "--config", "oor.cfg"]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("allow_out_of_range"));

    // With the override it runs.
    let cfg = format!(
        "{TINY}sweep.values = 0.9\nsweep.trials = 2\nsweep.allow_out_of_range = true\n"
    );
    fs::write(dir.path().join("ok.cfg"), &cfg).unwrap();
    let out = run_in(dir.path(), &["sweep", "--config", "ok.cfg"]);
    assert_eq!(code(&out), 0, "{}", stderr_of(&out));
}
