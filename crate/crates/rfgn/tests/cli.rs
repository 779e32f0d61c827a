use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rfgn::metrics::{canonical_json, emit_metrics, read_metrics};
use rfgn::snapshot;
use rfgn_core::eval::{Metrics, Protocol};
use rfgn_core::graph::NodeFeatures;
use serde_json::{json, Value};

fn rfgn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfgn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn example_metrics() -> Metrics {
    Metrics {
        mrr: 7.0 / 12.0,
        hits1: 1.0 / 3.0,
        hits3: 2.0 / 3.0,
        hits10: 1.0,
        n_queries: 3,
    }
}

#[test]
fn metrics_json_is_canonical() {
    let text = canonical_json(&example_metrics(), &Protocol::default());
    assert_eq!(
        text,
        "{\n  \"filtered\": true,\n  \"hits@1\": 0.333333,\n  \"hits@10\": 1.000000,\n  \"hits@3\": 0.666667,\n  \"mrr\": 0.583333,\n  \"n_queries\": 3,\n  \"protocol\": \"full\"\n}\n"
    );
    let partial = canonical_json(&example_metrics(), &Protocol::partial(50));
    assert!(partial.contains("\"protocol\": \"partial-50\""));
}

#[test]
fn emitting_twice_appends_rows_and_overwrites_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.json");
    emit_metrics(&example_metrics(), &Protocol::default(), &path).unwrap();
    let second = Metrics {
        mrr: 0.25,
        ..example_metrics()
    };
    emit_metrics(&second, &Protocol::default(), &path).unwrap();
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let back = read_metrics(&path).unwrap();
    assert_eq!(back.mrr, 0.25);
    assert_eq!(back.hits1, 0.333333);
    assert_eq!(back.n_queries, 3);
    assert_eq!(back.protocol, "full");
    assert_eq!(canonical_json(&back.metrics(), &Protocol::default()), canonical_json(&second, &Protocol::default()));
}

#[test]
fn snapshots_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let m = NodeFeatures::random(17, 6, 3).matrix;
    let path = dir.path().join("m.bin");
    snapshot::write(&path, &m).unwrap();
    let back = snapshot::read(&path).unwrap();
    assert_eq!(back.as_slice().len(), m.as_slice().len());
    assert!(back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(fs::metadata(&path).unwrap().len(), 24 + 17 * 6 * 8);
}

#[test]
fn verify_reports_and_exits_zero() {
    let out = rfgn(&["verify", "--seed", "7", "--graphs", "4"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}");
    let value: f64 = stdout.trim().strip_prefix("max divergence ").unwrap().parse().unwrap();
    assert!(value <= 1e-9);
}

/// Two disjoint rings of 12 entities with three relation patterns; the last
/// two edges of each relation are held out for validation and test.
struct Fixture {
    dir: tempfile::TempDir,
}

fn ring_lines(prefix: &str, n: usize) -> (Vec<String>, Vec<String>, Vec<String>) {
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (r, step) in [("next", 1), ("skip", 2), ("far", 5)] {
        for i in 0..n {
            let line = format!("{prefix}{i}\t{r}\t{prefix}{}", (i + step) % n);
            match i {
                i if i == n - 1 => test.push(line),
                i if i == n - 2 => valid.push(line),
                _ => train.push(line),
            }
        }
    }
    (train, valid, test)
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, lines: &[String]| fs::write(dir.path().join(name), lines.join("\n") + "\n").unwrap();
        let (train, valid, test) = ring_lines("a", 12);
        write("train.txt", &train);
        write("valid.txt", &valid);
        write("test.txt", &test);
        let (ind_train, ind_valid, ind_test) = ring_lines("b", 10);
        write("ind_train.txt", &ind_train);
        write("ind_valid.txt", &ind_valid);
        write("ind_test.txt", &ind_test);
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, extra: Value) -> PathBuf {
        let mut cfg = json!({
            "train": "train.txt", "valid": "valid.txt", "test": "test.txt",
            "out_dir": name, "dim": 8, "beta": 0.3, "epochs": 3, "batch_size": 16,
            "optimizer": "adagrad", "lambda": 0.01, "seed": 4
        });
        for (k, v) in extra.as_object().unwrap() {
            cfg[k] = v.clone();
        }
        let path = self.path(&format!("{name}.json"));
        fs::write(&path, cfg.to_string()).unwrap();
        path
    }
}

fn run_ok(args: &[&str]) -> String {
    let out = rfgn(args);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(out.status.success(), "{args:?}: {stderr}");
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_then_eval_reproduces_metrics() {
    let f = Fixture::new();
    for (name, extra) in [
        ("infinite", json!({})),
        ("three", json!({"layers": 3})),
        ("fm", json!({"mode": "pure_fm"})),
        ("complex", json!({"score": "complex", "protocol": "partial", "negatives": 5})),
    ] {
        let cfg = f.config(name, extra);
        run_ok(&["train", "--config", s(&cfg)]);
        let dir = f.path(name);
        for file in ["config.json", "psi.bin", "cache.bin", "features.bin", "log.csv", "metrics.json", "results.csv"] {
            assert!(dir.join(file).is_file(), "{name}: missing {file}");
        }
        let trained = fs::read_to_string(dir.join("metrics.json")).unwrap();
        let out = f.path(&format!("{name}-eval"));
        run_ok(&["eval", "--model", s(&dir), "--out", s(&out)]);
        assert_eq!(fs::read_to_string(out.join("metrics.json")).unwrap(), trained, "{name}");
        let log = fs::read_to_string(dir.join("log.csv")).unwrap();
        assert!(log.starts_with("epoch,loss,valid_mrr,seconds\n"));
        assert_eq!(log.lines().count(), 4);
    }
}

#[test]
fn seeded_runs_are_identical() {
    let f = Fixture::new();
    let cfg = f.config("a", json!({"layers": 2}));
    run_ok(&["train", "--config", s(&cfg), "--out", s(&f.path("first"))]);
    run_ok(&["train", "--config", s(&cfg), "--out", s(&f.path("second"))]);
    for file in ["psi.bin", "cache.bin"] {
        assert_eq!(fs::read(f.path("first").join(file)).unwrap(), fs::read(f.path("second").join(file)).unwrap());
    }
}

#[test]
fn inductive_runs_and_ablation() {
    let f = Fixture::new();
    let extra = json!({
        "layers": 2,
        "inductive_graph": "ind_train.txt",
        "inductive_valid": "ind_valid.txt",
        "inductive_test": "ind_test.txt"
    });
    let cfg = f.config("ind", extra);
    let stdout = run_ok(&["train", "--config", s(&cfg)]);
    assert!(stdout.contains("test: mrr"));
    let m = read_metrics(&f.path("ind").join("metrics.json")).unwrap();
    // three relations, one held-out edge each, both directions
    assert_eq!(m.n_queries, 6);

    let stdout = run_ok(&["ablate", "--config", s(&cfg), "--out", s(&f.path("abl"))]);
    assert!(stdout.contains("delta mrr"));
    for sub in ["with_global_term", "without_global_term"] {
        assert!(f.path("abl").join(sub).join("metrics.json").is_file());
    }
    let summary = fs::read_to_string(f.path("abl").join("ablation.json")).unwrap();
    assert!(summary.contains("\"delta_mrr\""));
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    let unknown = f.path("unknown.json");
    fs::write(&unknown, r#"{"train": "train.txt", "dimension": 3}"#).unwrap();
    assert_eq!(rfgn(&["train", "--config", s(&unknown)]).status.code(), Some(2));

    let odd = f.config("odd", json!({"score": "complex", "dim": 7}));
    assert_eq!(rfgn(&["train", "--config", s(&odd)]).status.code(), Some(2));

    let missing = f.path("missing.json");
    fs::write(&missing, r#"{"train": "nope.txt"}"#).unwrap();
    assert_eq!(rfgn(&["train", "--config", s(&missing)]).status.code(), Some(2));

    let blowup = f.config(
        "blowup",
        json!({"beta": 1e250, "optimizer": "sgd", "feature_std": 50.0, "candidates": "full"}),
    );
    assert_eq!(rfgn(&["train", "--config", s(&blowup)]).status.code(), Some(3));

    let out = Command::new(env!("CARGO_BIN_EXE_rfgn"))
        .args(["verify", "--graphs", "1"])
        .env("RFGN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let bad_data = f.path("bad.txt");
    fs::write(&bad_data, "a\tr\ta\n").unwrap();
    let cfg = f.path("bad.json");
    fs::write(&cfg, r#"{"train": "bad.txt"}"#).unwrap();
    assert_eq!(rfgn(&["train", "--config", s(&cfg)]).status.code(), Some(1));
}
