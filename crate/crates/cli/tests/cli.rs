use std::path::Path;
use std::process::{Command, Output};

use beatbench::artifact::{read_artifacts, RunArtifact};

fn beatbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beatbench"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn synth_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = beatbench(dir.path(), &["synth", "--per-class", "100", "--seed", "7", "-o", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("class 4: 100"));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 500);
    assert!(text.lines().all(|l| l.split(',').count() == 188));
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn synth_rejects_zero_and_unwritable() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&beatbench(dir.path(), &["synth", "--per-class", "0"])), 1);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("beats.csv");
    let o = beatbench(dir.path(), &["synth", "--per-class", "2", "-o", target.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
    assert!(!o.stderr.is_empty());
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&beatbench(d, &["train", "--model", "cnn"])), 1);
    assert_eq!(code(&beatbench(d, &["train", "--model", "mlp", "--data", "synth:3"])), 1);
    assert_eq!(code(&beatbench(d, &["report"])), 1);
    assert_eq!(code(&beatbench(d, &["bogus"])), 1);
    assert_eq!(code(&beatbench(d, &["--help"])), 0);

    let bad = d.join("bad.csv");
    std::fs::write(&bad, "1,2,3\n").unwrap();
    assert_eq!(code(&beatbench(d, &["train", "--model", "cnn", "--data", bad.to_str().unwrap()])), 2);
    let missing = d.join("missing.csv");
    assert_eq!(code(&beatbench(d, &["train", "--model", "cnn", "--data", missing.to_str().unwrap()])), 2);
    let corrupt = d.join("corrupt.json");
    std::fs::write(&corrupt, "{\"schema_version\": 1").unwrap();
    assert_eq!(code(&beatbench(d, &["report", corrupt.to_str().unwrap()])), 2);

    let o = beatbench(d, &["train", "--model", "cnn", "--data", "synth:5", "--epochs", "3", "--lr", "1.7e308"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
}

#[test]
fn train_artifact_round_trips_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = beatbench(d, &["train", "--model", "dbn", "--data", "synth:20", "--seed", "7", "--epochs", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().nth(2).unwrap().starts_with("dbn "));

    let path = d.join("dbn.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let a = RunArtifact::from_json(&text).unwrap();
    assert_eq!(a.to_json(), text);
    assert_eq!(a.history.epochs.len(), 3);
    let history = std::fs::read_to_string(d.join("dbn_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);

    let again = tempfile::tempdir().unwrap();
    let o = beatbench(again.path(), &["train", "--replay", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = RunArtifact::read(&again.path().join("dbn.json")).unwrap();
    assert_eq!(a.without_timing().to_json(), b.without_timing().to_json());
}

#[test]
fn bench_shares_split_and_report_renders() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = beatbench(d, &["bench", "--models", "cnn,dbn", "--data", "synth:20", "--epochs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let all = read_artifacts(&d.join("bench.json")).unwrap();
    assert_eq!(all.len(), 2);
    assert_eq!(all[0].config.data, all[1].config.data);
    assert_eq!(all[0].config.seeds, all[1].config.seeds);
    assert_eq!(all[0].metrics.confusion.total(), all[1].metrics.confusion.total());
    let csv = std::fs::read_to_string(d.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("model,accuracy,precision,recall,f1_score,"));

    // one artifact, one row
    let single = d.join("cnn_only.json");
    std::fs::write(&single, all[0].to_json()).unwrap();
    let o = beatbench(d, &["report", single.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 3);
    assert!(!stdout(&o).contains("Version"));

    // a foreign tool version gets flagged
    let mut old = all[1].clone();
    old.tool_version = "0.0.1".into();
    let old_path = d.join("old.json");
    std::fs::write(&old_path, old.to_json()).unwrap();
    let o = beatbench(d, &["report", single.to_str().unwrap(), old_path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.lines().next().unwrap().ends_with("Version"));
    assert!(out.contains("0.0.1 (mismatch"));
    assert!(std::fs::read_to_string(d.join("report.csv")).unwrap().contains("tool_version"));
}

#[test]
fn macs_command() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = "input=28x28;conv=8x3x3;pool=2x2;fc=5";
    let exact = beatbench(d, &["macs", "--spec", spec, "--mode", "exact"]);
    let formula = beatbench(d, &["macs", "--spec", spec, "--mode", "formula"]);
    let conv = |o: &Output| -> u64 {
        let line = stdout(o).lines().find(|l| l.contains(":conv2d")).unwrap().to_string();
        line.split('|').next_back().unwrap().trim().parse().unwrap()
    };
    assert_eq!(conv(&formula) - conv(&exact), 8 * 9 * (784 - 676));
    let both = stdout(&beatbench(d, &["macs", "--spec", spec]));
    assert!(both.contains(&format!("conv2d +{}", 8 * 9 * (784 - 676))), "{both}");
    let o = beatbench(d, &["macs", "--model", "lstm", "--clock", "100e6", "--array", "8x8"]);
    assert!(stdout(&o).contains("estimated latency"));
    assert_eq!(code(&beatbench(d, &["macs", "--spec", "conv=3"])), 1);
}
