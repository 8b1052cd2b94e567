use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn creens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_creens"))
        .args(args)
        .output()
        .expect("spawn creens")
}

fn corpus(dir: &Path, n: usize) -> PathBuf {
    let words = [
        "great", "awful", "tasty", "slow", "friendly", "cold", "pizza", "sushi", "service", "price",
    ];
    let mut lines = String::new();
    for i in 0..n {
        let text: Vec<&str> = (0..6).map(|j| words[(i * 7 + j * 3) % words.len()]).collect();
        let row = json!({"review_id": format!("r{i:04}"), "text": text.join(" "), "stars": i % 5 + 1});
        lines.push_str(&format!("{row}\n"));
    }
    let path = dir.join("corpus.jsonl");
    std::fs::write(&path, lines).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SIZES: [&str; 4] = ["--pool-size", "120", "--test-size", "80"];

#[test]
fn pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 300);
    let out = dir.path().join("run");
    let o = creens(
        &[
            &["pipeline", "--corpus", p(&c), "--out", p(&out), "--kshot"][..],
            &SIZES,
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("Effect of ensemble") && stdout.contains("5-shot"));
    for f in [
        "manifest.json",
        "stats.json",
        "test.jsonl",
        "examples.json",
        "predictions.jsonl",
        "records.jsonl",
        "report.json",
        "consistency.json",
        "summary.txt",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn staged_commands_match_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 300);
    let staged = dir.path().join("staged");
    let whole = dir.path().join("whole");
    for cmd in ["ingest", "select", "run"] {
        let o = creens(&[&[cmd, "--corpus", p(&c), "--out", p(&staged)][..], &SIZES].concat());
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = creens(&[&["pipeline", "--corpus", p(&c), "--out", p(&whole)][..], &SIZES].concat());
    assert!(o.status.success());
    for f in ["records.jsonl", "predictions.jsonl", "report.json", "examples.json"] {
        assert_eq!(
            std::fs::read(staged.join(f)).unwrap(),
            std::fs::read(whole.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn compare_and_consistency_read_run_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 300);
    let low = dir.path().join("low");
    let high = dir.path().join("high");
    for (out, t) in [(&low, "0.1"), (&high, "1.5")] {
        let o = creens(
            &[
                &[
                    "pipeline",
                    "--corpus",
                    p(&c),
                    "--out",
                    p(out),
                    "--temperature",
                    t,
                    "--mock-temp-gain",
                    "0.2",
                ][..],
                &SIZES,
            ]
            .concat(),
        );
        assert!(o.status.success());
    }
    let o = creens(&["compare", p(&low), p(&high), "--json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["delta"]["accuracy"].as_f64().unwrap() < 0.0);
    assert_eq!(v["mcnemar"]["method"], "mcnemar-cc");

    let o = creens(&["consistency", "--run", p(&low)]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("n_unique"));
    let o = creens(&["evaluate", "--run", p(&low), "--against", p(&high)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("McNemar"));
}

#[test]
fn config_file_keys_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 300);
    let first = dir.path().join("first");
    assert!(
        creens(&[&["pipeline", "--corpus", p(&c), "--out", p(&first)][..], &SIZES].concat())
            .status
            .success()
    );
    let manifest: Value = serde_json::from_slice(&std::fs::read(first.join("manifest.json")).unwrap()).unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, manifest["config"].to_string()).unwrap();

    let second = dir.path().join("second");
    let o = creens(&[
        "pipeline",
        "--config",
        p(&cfg_path),
        "--out",
        p(&second),
        "--temperature",
        "0.8",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m2: Value = serde_json::from_slice(&std::fs::read(second.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m2["temperature"], 0.8);
    assert_eq!(m2["config"]["split"]["pool_size"], 120);
}

#[test]
fn exit_codes_separate_validation_from_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), 300);
    let out = dir.path().join("x");

    let o = creens(
        &[
            &["pipeline", "--corpus", p(&c), "--out", p(&out), "--temperature=-1"][..],
            &SIZES,
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    let o = creens(&["pipeline", "--corpus", "/nonexistent.jsonl", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let o = creens(&["pipeline", "--corpus", p(&c), "--out", p(&out)]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "default split needs more rows than the corpus has"
    );
    assert_eq!(creens(&["pipeline", "--no-such-flag"]).status.code(), Some(1));

    let o = creens(
        &[
            &[
                "pipeline",
                "--corpus",
                p(&c),
                "--out",
                p(&out),
                "--backend",
                "remote",
                "--endpoint",
                "http://127.0.0.1:9/v1",
                "--max-in-flight",
                "1",
                "--strategy",
                "rse",
            ][..],
            &SIZES,
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("aborted"));
}
