use std::path::Path;
use std::process::{Command, Output};

fn feedchan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feedchan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_spec(dir: &Path, text: &str) -> String {
    let p = dir.join("spec.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const CLEAN: &str = r#"
name = "clean"
scenario = "clean-session"
seeds = [1, 2]

[message]
kind = "random"
packages = 50
"#;

#[test]
fn run_emits_delimited_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), CLEAN);
    let o = feedchan(&["run", &spec, "--format", "delimited"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("aggregate,0,0,"));
}

#[test]
fn run_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), CLEAN);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = feedchan(&["run", &spec, "--format", "structured", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let json = std::fs::read_to_string(&a).unwrap();
    assert!(json.starts_with('{') && json.contains("\"scenario\": \"clean-session\""));
}

#[test]
fn seed_and_set_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), CLEAN);
    let o = feedchan(&["run", &spec, "--seed", "42", "--set", "session.package_length=4", "--format", "delimited"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("42,"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), CLEAN);
    let o = feedchan(&["run", &spec, "--set", "session.package_length=2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("session.package_length"));

    assert_eq!(feedchan(&["run", "/nonexistent/spec.toml"]).status.code(), Some(1));
    assert_eq!(feedchan(&["tomography", "401", "1,1,1"]).status.code(), Some(1));
    assert_eq!(feedchan(&["tomography", "401", "0,0"]).status.code(), Some(1));
    assert_eq!(feedchan(&["attack", "nonsense", "3"]).status.code(), Some(1));
    assert_eq!(feedchan(&["walk-check"]).status.code(), Some(1));
    assert_eq!(feedchan(&["walk-check", "10", "--format", "xml"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let o = feedchan(&["walk-check", "10", "--out", "/nonexistent-dir/report.txt"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_with_zero() {
    assert_eq!(feedchan(&["--help"]).status.code(), Some(0));
}

#[test]
fn walk_check_passes() {
    let o = feedchan(&["walk-check", "5000", "--seed", "7", "--format", "delimited"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("seed,arc_residual,turn_residual,norm_residual\n7,"));
}

#[test]
fn tomography_reports_three_components() {
    let o = feedchan(&["tomography", "401", "0.5,0.5,0.7071067811865476", "--runs", "4", "--format", "delimited"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 6);
    assert!(text.starts_with("seed,mean_x,mean_y,mean_z,"));
}

#[test]
fn attack_exports_transcript_and_eve_record() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let e = dir.path().join("e.jsonl");
    let o = feedchan(&[
        "attack",
        "fixed-axis-measure",
        "2",
        "--axis",
        "0,1,0",
        "--packages",
        "30",
        "--transcript",
        t.to_str().unwrap(),
        "--eve-record",
        e.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let transcript = std::fs::read_to_string(&t).unwrap();
    assert!(transcript.lines().next().unwrap().starts_with(r#"{"index":0,"kind":"qubit-sent""#));
    let eve = std::fs::read_to_string(&e).unwrap();
    assert!(eve.lines().all(|l| l.contains(r#""strategy":"fixed-axis-measure""#)));
    assert!(eve.lines().last().unwrap().contains("eve-summary"));
}

#[test]
fn timing_is_opt_in() {
    let plain = stdout(&feedchan(&["walk-check", "100", "--format", "structured"]));
    assert!(!plain.contains("duration_ms"));
    let timed = stdout(&feedchan(&["walk-check", "100", "--format", "structured", "--timing"]));
    assert!(timed.contains("duration_ms"));
}
