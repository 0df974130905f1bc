use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn phaseret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaseret"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn generate(dir: &Path, size: &str, seed: &str) -> (String, String) {
    let (inst, truth) = (path(dir, "a.instance"), path(dir, "a.truth"));
    let out = phaseret(&[
        "generate",
        "--kind",
        "random-smooth",
        "--size",
        size,
        "--seed",
        seed,
        "--truth",
        &truth,
        "--out",
        &inst,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    (inst, truth)
}

fn stable(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("elapsed_seconds"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
}

fn branch_log(text: &str) -> String {
    text.split("[branch_log]")
        .nth(1)
        .and_then(|s| s.split("\n[").next())
        .unwrap()
        .to_string()
}

#[test]
fn generation_is_deterministic() {
    let a = phaseret(&[
        "generate",
        "--kind",
        "random-smooth",
        "--size",
        "32",
        "--seed",
        "1",
    ]);
    let b = phaseret(&[
        "generate",
        "--kind",
        "random-smooth",
        "--size",
        "32",
        "--seed",
        "1",
    ]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn generate_solve_verify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, truth) = generate(dir.path(), "24", "3");
    let report = path(dir.path(), "a.report");
    let first = phaseret(&["solve", &inst, "--truth", &truth, "--out", &report]);
    assert!(first.status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    let again = phaseret(&["solve", &inst, "--truth", &truth]);
    assert_eq!(
        stable(&text),
        stable(&String::from_utf8_lossy(&again.stdout))
    );

    let verified = phaseret(&["verify", &report, "--truth", &truth, "--instance", &inst]);
    assert!(verified.status.success());
    let metrics = String::from_utf8_lossy(&verified.stdout);
    assert!(value(&metrics, "spectral_error") < 1e-10, "{metrics}");
    assert!(
        value(&metrics, "field_magnitude_error") < 1e-10,
        "{metrics}"
    );
}

#[test]
fn truth_verifies_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let (_, truth) = generate(dir.path(), "16", "0");
    let out = phaseret(&["verify", &truth, "--truth", &truth]);
    let metrics = String::from_utf8_lossy(&out.stdout);
    assert_eq!(value(&metrics, "spectral_error"), 0.0);
    assert_eq!(value(&metrics, "residual"), 0.0);
}

#[test]
fn gauge_override_only_rotates() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, truth) = generate(dir.path(), "16", "5");
    let report = path(dir.path(), "turned.report");
    let out = phaseret(&["solve", &inst, "--gauge", "-1.25", "--out", &report]);
    assert!(out.status.success());
    let out = phaseret(&["verify", &report, "--truth", &truth]);
    assert!(value(&String::from_utf8_lossy(&out.stdout), "spectral_error") < 1e-10);
}

#[test]
fn selectors_log_the_same_branches() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, _) = generate(dir.path(), "40", "8");
    let inc = phaseret(&["solve", &inst, "--selector", "incremental"]);
    let full = phaseret(&["solve", &inst, "--selector", "full"]);
    let (inc, full) = (
        String::from_utf8_lossy(&inc.stdout),
        String::from_utf8_lossy(&full.stdout),
    );
    // Gaps may differ in the last bits; the step and branch columns may not.
    let columns = |log: &str| -> Vec<String> {
        log.lines()
            .filter(|l| !l.starts_with('#') && !l.is_empty())
            .map(|l| l.split_whitespace().take(4).collect::<Vec<_>>().join(" "))
            .collect()
    };
    assert_eq!(columns(&branch_log(&inc)), columns(&branch_log(&full)));
}

#[test]
fn json_report_parses() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, truth) = generate(dir.path(), "8", "2");
    let out = phaseret(&["solve", &inst, "--truth", &truth, "--format", "json"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["metrics"]["spectral_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn two_dimensional_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, truth) = (path(dir.path(), "b.instance"), path(dir.path(), "b.truth"));
    let out = phaseret(&[
        "generate", "--dim", "2", "--order", "2", "--seed", "4", "--truth", &truth, "--out", &inst,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = phaseret(&["solve", &inst, "--truth", &truth]);
    assert!(value(&String::from_utf8_lossy(&out.stdout), "spectral_error") < 1e-10);
}

#[test]
fn exit_codes_separate_usage_from_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let corrupt: PathBuf = dir.path().join("corrupt.instance");
    std::fs::write(&corrupt, "phaseret instance 1\ngrid seven\n").unwrap();
    let out = phaseret(&["solve", corrupt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = phaseret(&["solve", &path(dir.path(), "missing.instance")]);
    assert_eq!(out.status.code(), Some(1));

    let out = phaseret(&["bench", "--sizes"]);
    assert_eq!(out.status.code(), Some(2));
    let out = phaseret(&["generate", "--kind", "random-smooth"]);
    assert_eq!(out.status.code(), Some(2));
}
