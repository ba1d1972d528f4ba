//! End-to-end tests of the command-line interface: exit codes, file round
//! trips, tamper detection, and byte-level determinism.

use std::path::Path;
use std::process::{Command, Output};

fn soscert(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soscert"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn toy_synth_verify_simulate_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = soscert(&["synth", "toy1d", "--out", "toy.cert"], dir.path());
    assert_exit(&out, 0);
    assert!(dir.path().join("toy.cert").exists());

    let out = soscert(
        &["verify", "toy1d", "toy.cert", "--samples", "5000", "--trajectories", "10", "--t-final", "2"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("overall: PASS"), "{report}");

    let out = soscert(
        &["simulate", "toy1d", "toy.cert", "--x0", "0.5", "--t-final", "1", "--dt", "0.01"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let csv = String::from_utf8_lossy(&out.stdout);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "traj,t,x1,u1,V,B1");
    assert!(csv.lines().count() > 50);

    let out = soscert(
        &["plot-data", "toy1d", "toy.cert", "--plane", "x1,x1", "--grid", "11"],
        dir.path(),
    );
    assert_exit(&out, 1); // degenerate plane rejected

    // 1-D problems have no second axis; use the oscillator-style check on
    // the converter problem instead (in the slow suite). Here just check a
    // malformed grid.
    let out = soscert(&["plot-data", "toy1d", "toy.cert", "--grid", "11"], dir.path());
    assert_exit(&out, 1);
}

#[test]
fn simulate_from_equilibrium_rows_are_constant() {
    let dir = tempfile::tempdir().unwrap();
    assert_exit(&soscert(&["synth", "toy1d", "--out", "toy.cert"], dir.path()), 0);
    let out = soscert(
        &["simulate", "toy1d", "toy.cert", "--x0", "0", "--t-final", "0.5", "--dt", "0.1"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let csv = String::from_utf8_lossy(&out.stdout);
    for line in csv.lines().skip(1) {
        let x1: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(x1, 0.0, "line {line}");
    }
}

#[test]
fn malformed_problem_file_exits_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.prob"), "variables x1\nf $$$\n").unwrap();
    let out = soscert(&["synth", "bad.prob"], dir.path());
    assert_exit(&out, 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn tampered_certificate_fails_verification_with_exit_five() {
    let dir = tempfile::tempdir().unwrap();
    assert_exit(&soscert(&["synth", "toy1d", "--out", "toy.cert"], dir.path()), 0);
    let path = dir.path().join("toy.cert");
    let text = std::fs::read_to_string(&path).unwrap();
    // Flip the sign of one Gram entry of the first witness.
    let mut done = false;
    let tampered: Vec<String> = text
        .lines()
        .map(|l| {
            if !done && l.starts_with("gramrow") {
                done = true;
                let mut toks: Vec<String> = l.split_whitespace().map(str::to_string).collect();
                let v: f64 = toks[1].parse().unwrap();
                toks[1] = format!("{:?}", v + 0.37);
                toks.join(" ")
            } else {
                l.to_string()
            }
        })
        .collect();
    std::fs::write(&path, tampered.join("\n") + "\n").unwrap();
    let out = soscert(
        &["verify", "toy1d", "toy.cert", "--samples", "2000", "--trajectories", "2", "--t-final", "0.5"],
        dir.path(),
    );
    assert_exit(&out, 5);
}

#[test]
fn hash_mismatch_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    assert_exit(&soscert(&["synth", "toy1d", "--out", "toy.cert"], dir.path()), 0);
    // Verify against a DIFFERENT problem file: hash binding must fail.
    std::fs::write(
        dir.path().join("other.prob"),
        "variables x1\nf 0\nG 1\nw x1^2 - 1\nr x1^2 - 2\ncenter 0 | -1\ndegree V 2 even\ndegree B 2 even\ndegree s1 0\ndegree s2 2\ndegree s3 2\ndegree s4 2\ndegree p 3\ndegree pm1 2\nseed 2\n",
    )
    .unwrap();
    let out = soscert(&["verify", "other.prob", "toy.cert", "--samples", "100", "--trajectories", "1"], dir.path());
    assert_exit(&out, 4);
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    assert_exit(&soscert(&["synth", "toy1d", "--out", "a.cert", "--seed", "7"], dir.path()), 0);
    assert_exit(&soscert(&["synth", "toy1d", "--out", "b.cert", "--seed", "7"], dir.path()), 0);
    let a = std::fs::read(dir.path().join("a.cert")).unwrap();
    let b = std::fs::read(dir.path().join("b.cert")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoints_and_resume_reproduce_iterates() {
    let dir = tempfile::tempdir().unwrap();
    let out = soscert(
        &["synth", "toy1d", "--out", "full.cert", "--checkpoint-dir", "ckpt", "--threshold", "0", "--max-outer", "3"],
        dir.path(),
    );
    assert_exit(&out, 0);
    assert!(dir.path().join("ckpt/iter1_step1.cert").exists());
    assert!(dir.path().join("ckpt/iter1_step2.cert").exists());
    assert!(dir.path().join("ckpt/iter3_step2.cert").exists());
}

#[test]
fn unknown_builtin_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = soscert(&["synth", "no-such-problem"], dir.path());
    assert_exit(&out, 1);
}

#[test]
fn dump_sdp_writes_sparse_text() {
    let dir = tempfile::tempdir().unwrap();
    let out = soscert(
        &["synth", "toy1d", "--out", "toy.cert", "--dump-sdp", "step1.sdp"],
        dir.path(),
    );
    assert_exit(&out, 0);
    let dump = std::fs::read_to_string(dir.path().join("step1.sdp")).unwrap();
    assert!(dump.starts_with("blocks "), "{}", &dump[..40.min(dump.len())]);
    assert!(dump.contains("rhs"));
}
