use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_platoon-sim"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(code(&run(&mut bin())), 1);
    assert_eq!(code(&run(bin().arg("eval"))), 1);
    assert_eq!(code(&run(bin().arg("--help"))), 0);
}

#[test]
fn eval_writes_reports_and_traces_that_replay_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.csv");
    let traces = dir.path().join("traces");
    let out = run(bin()
        .args(["eval", "--seeds", "0..3", "--jobs", "2", "--config"])
        .arg(config("plain.toml"))
        .arg("--report")
        .arg(&report)
        .arg("--traces")
        .arg(&traces));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 episodes"));
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 1 + 3 + 1);

    let trace = traces.join("seed_1.jsonl");
    let series = dir.path().join("series");
    let out = run(bin().arg("replay").arg("--trace").arg(&trace).arg("--emit-series").arg(&series));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(series.join("positions.csv").exists() && series.join("headways.csv").exists());

    // Nudge one recorded position: replay must report the divergence.
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[3] = nudge_first_position(&lines[3]);
    let corrupted = dir.path().join("corrupted.jsonl");
    std::fs::write(&corrupted, lines.join("\n")).unwrap();
    let out = run(bin().arg("replay").arg("--trace").arg(&corrupted));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("divergence at step"));
}

/// Shifts the first `"s"` value in a step record by a quarter metre.
fn nudge_first_position(line: &str) -> String {
    let at = line.find("\"s\":").expect("a position field") + 4;
    let end = at + line[at..].find(',').expect("more fields follow");
    let v: f64 = line[at..end].parse().expect("a number");
    format!("{}{}{}", &line[..at], v + 0.25, &line[end..])
}

#[test]
fn bad_config_exits_one_with_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "name = \"x\"\n[supervisor.safety]\nhorizon = \"long\"\n").unwrap();
    let out = run(bin().arg("eval").arg("--config").arg(&cfg).arg("--report").arg(dir.path().join("r.csv")));
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("supervisor.safety.horizon"));

    let out = run(bin().arg("eval").arg("--config").arg(dir.path().join("missing.toml")).arg("--report").arg(dir.path().join("r.csv")));
    assert_eq!(code(&out), 1);
}

#[test]
fn train_then_evaluate_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.toml");
    std::fs::write(&cfg, "n_steps = 64\ntotal_steps = 128\n[network]\nhidden = [16, 16]\n[optim]\nminibatch = 32\nepochs = 1\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = run(bin().args(["train", "--seed", "3", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let checkpoint = out_dir.join("checkpoint.bin");
    assert!(checkpoint.exists());
    assert_eq!(std::fs::read_to_string(out_dir.join("stats.csv")).unwrap().lines().count(), 1 + 2);

    let out = run(bin()
        .args(["eval", "--seeds", "5", "--config"])
        .arg(config("flow_oscillation.toml"))
        .arg("--checkpoint")
        .arg(&checkpoint)
        .arg("--report")
        .arg(dir.path().join("r.csv")));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let mismatch = dir.path().join("four.toml");
    std::fs::write(&mismatch, "[traffic.platoon]\nsize = 4\n").unwrap();
    let out = run(bin().arg("eval").arg("--config").arg(&mismatch).arg("--checkpoint").arg(&checkpoint).arg("--report").arg(dir.path().join("r.csv")));
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint controls 3 vehicles"));
}
