//! Exit-code and output contract of the command-line interface.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_enforcemint"))
}

fn tmp(name: &str, content: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("enforcemint-cli-tests");
    fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    fs::write(&p, content).unwrap();
    p
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn synth_emits_json_and_reports_bound() {
    let prop = tmp("ok.prop", "(s:x . a:y . end + end)*");
    let alpha = tmp("alpha.txt", "s:x\na:y\ntick\nend\n");
    let out = bin().args(["synth"]).arg(&prop).arg(&alpha).output().unwrap();
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(json.get("states").is_some());
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("bound"), "bound line missing: {err}");
    let dot = bin()
        .args(["synth"])
        .arg(&prop)
        .arg(&alpha)
        .args(["--format", "dot"])
        .output()
        .unwrap();
    assert_eq!(code(&dot), 0);
    assert!(stdout(&dot).starts_with("digraph"));
}

#[test]
fn synth_error_codes() {
    let alpha = tmp("alpha2.txt", "s:x\na:y\ntick\nend\n");
    let bad = tmp("bad.prop", "(s:x . )*");
    assert_eq!(code(&bin().arg("synth").arg(&bad).arg(&alpha).output().unwrap()), 1);
    // A union repeating a guard event is not semantically deterministic.
    let nondet = tmp("nd.prop", "(s:x . end + s:x . a:y . end)*");
    assert_eq!(code(&bin().arg("synth").arg(&nondet).arg(&alpha).output().unwrap()), 2);
    // Branches not ending in `end` are ill-formed.
    let illformed = tmp("ill.prop", "(s:x . a:y + end)*");
    assert_eq!(code(&bin().arg("synth").arg(&illformed).arg(&alpha).output().unwrap()), 2);
    let outside = tmp("oob.prop", "(s:z . end)*");
    assert_eq!(code(&bin().arg("synth").arg(&outside).arg(&alpha).output().unwrap()), 3);
}

#[test]
fn check_classifies_member_prefix_violation_tau() {
    let prop = tmp("chk.prop", "(s:x . a:y . end + end)*");
    for (trace, want_out, want_code) in [
        ("s:x a:y end", "member", 0),
        ("s:x a:y end s:x", "strict-prefix", 0),
        ("a:y s:x end", "violation", 5),
    ] {
        let t = tmp("chk.trace", trace);
        let out = bin().arg("check").arg(&t).arg(&prop).output().unwrap();
        assert_eq!(code(&out), want_code, "trace `{trace}`");
        assert!(stdout(&out).contains(want_out), "trace `{trace}` -> {}", stdout(&out));
    }
    let t = tmp("tau.trace", "tau end");
    assert_eq!(code(&bin().arg("check").arg(&t).arg(&prop).output().unwrap()), 4);
}

#[test]
fn simulate_runs_a_controller_and_is_deterministic() {
    let ctrl = tmp("ctrl.txt", "P = tick . sens{ s:x -> act a:y . end . P } else end . P\n");
    let run = |seed: &str| {
        let out = bin()
            .arg("simulate")
            .arg(&ctrl)
            .args(["--horizon", "6", "--random", "--seed", seed])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        stdout(&out)
    };
    assert_eq!(run("7"), run("7"));
    let csv = run("7");
    assert!(csv.starts_with("step,clock_tick,node,rule,action,inserted_for"));
    assert!(csv.contains("timesync"));
}

#[test]
fn scenario_exit_reflects_expectations() {
    let met = tmp(
        "scn-ok.ini",
        "[run]\nhorizon = 60\n[expect]\noverflow_t2 = false\nstuck = none\n",
    );
    let out = bin().arg("scenario").arg(&met).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("[ok]"));

    let unmet = tmp("scn-bad.ini", "[run]\nhorizon = 60\n[expect]\noverflow_t2 = true\n");
    let out = bin().arg("scenario").arg(&unmet).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("[FAIL]"));

    let malformed = tmp("scn-mal.ini", "[plant]\nin1 = oops\n");
    assert_eq!(code(&bin().arg("scenario").arg(&malformed).output().unwrap()), 1);
}

#[test]
fn scenario_writes_report_files() {
    let cfg = tmp("scn-out.ini", "[run]\nhorizon = 40\n");
    let dir = std::env::temp_dir().join("enforcemint-cli-tests").join("scn-out");
    let out = bin().arg("scenario").arg(&cfg).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(code(&out), 0);
    for f in ["report.json", "trace.csv", "levels.csv"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
}

#[test]
fn bench_emits_monotone_in_bound_table() {
    let out = bin().args(["bench", "--depths", "0..3"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let csv = stdout(&out);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "depth,prop_size,states,bound,within_bound,micros");
    assert_eq!(rows.len(), 5);
    let mut prev = 0usize;
    for r in &rows[1..] {
        let cols: Vec<&str> = r.split(',').collect();
        let states: usize = cols[2].parse().unwrap();
        assert!(cols[4] == "true", "state count exceeded bound: {r}");
        assert!(states >= prev, "state counts not monotone: {r}");
        prev = states;
    }
    // An empty range yields a header-only table.
    let empty = bin().args(["bench", "--depths", "3..2"]).output().unwrap();
    assert_eq!(stdout(&empty).lines().count(), 1);
}
