use std::process::{Command, Output};

fn swave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swave")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn deep_sequence_plans_and_separates() {
    let o = swave(&["sequence", "40", "50", "60", "--min-imaging", "0.18"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("549 frames/plane, 5490 frames, total 2.000 s"), "{text}");
}

#[test]
fn shallow_sequence_uses_the_shorter_slot() {
    let o = swave(&["sequence", "100", "160", "200"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("399 frames/plane, 3990 frames, total 1.500 s"));
}

#[test]
fn incommensurable_tones_exit_nonzero() {
    let o = swave(&["sequence", "40", "63.7"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn report_lists_reductions() {
    let dir = tempfile::tempdir().unwrap();
    let o = swave(&["report", "--output", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("83%") && text.contains("88%"), "{text}");
    assert!(dir.path().join("acquisition_time.csv").exists());
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn unknown_config_keys_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "sede = 4\n").unwrap();
    let o = swave(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn missing_config_is_an_error() {
    let o = swave(&["invert", "--config", "/nonexistent/run.toml"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
}

#[test]
fn bad_source_name_is_rejected_by_the_parser() {
    let o = swave(&["track", "--source", "magic"]);
    assert!(!o.status.success());
}

#[test]
fn simulate_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = swave(&["simulate", "--output", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("sha256"));
}
