use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sdgcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdgcn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sdgcn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    sdgcn(args).status.code().unwrap()
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_graph(path: &Path, n: usize, edges: &[(usize, usize)], feature: f64) {
    let g = serde_json::json!({
        "n": n,
        "edges": edges,
        "features": (0..n).map(|i| vec![feature * (1.0 + 0.1 * i as f64), feature]).collect::<Vec<_>>(),
        "labels": (0..n).map(|i| i % 2).collect::<Vec<_>>(),
        "num_classes": 2,
        "masks": {
            "train": vec![true; n],
            "val": vec![false; n],
            "test": vec![false; n],
        },
    });
    fs::write(path, g.to_string()).unwrap();
}

#[test]
fn generate_two_triangles() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let stdout = ok(&[
        "generate", "--blocks", "2", "--per-block", "3", "--p-in", "1", "--p-out", "0", "--out", s(&out),
    ]);
    assert!(stdout.contains("n=6 edges=6"), "{stdout}");
    let g = read_json(out.join("graph.json"));
    assert_eq!(g["n"], 6);
    assert_eq!(g["edges"].as_array().unwrap().len(), 6);
    let m = read_json(out.join("manifest.json"));
    assert_eq!(m["command"], "generate");
    assert!(m["input_hash"].as_str().unwrap().len() == 64);
    assert!(m["timings"]["total_ms"].is_number());
}

#[test]
fn default_block_model_degree_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let mut degrees = Vec::new();
    for seed in 0..5 {
        let a = dir.path().join(format!("a{seed}"));
        let b = dir.path().join(format!("b{seed}"));
        let seed = seed.to_string();
        ok(&["generate", "--seed", &seed, "--out", s(&a)]);
        ok(&["generate", "--seed", &seed, "--out", s(&b)]);
        let ga = fs::read(a.join("graph.json")).unwrap();
        assert_eq!(ga, fs::read(b.join("graph.json")).unwrap());
        let g: Value = serde_json::from_slice(&ga).unwrap();
        let n = g["n"].as_f64().unwrap();
        degrees.push(2.0 * g["edges"].as_array().unwrap().len() as f64 / n);
    }
    let mean = degrees.iter().sum::<f64>() / degrees.len() as f64;
    assert!((mean - 10.5).abs() <= 1.5, "mean degree {mean}");
}

#[test]
fn zero_weight_trace_matches_plain_model_at_first_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("plain");
    let neg = dir.path().join("neg");
    let common = ["train", "--per-block", "10", "--epochs", "4", "--omega", "0", "--seed", "2"];
    let mut a = common.to_vec();
    a.extend(["--neg", "none", "--out", s(&plain)]);
    let mut b = common.to_vec();
    b.extend(["--neg", "sdgcn", "--out", s(&neg)]);
    ok(&a);
    ok(&b);
    let ta = fs::read_to_string(plain.join("trace.jsonl")).unwrap();
    let tb = fs::read_to_string(neg.join("trace.jsonl")).unwrap();
    let la: Vec<&str> = ta.lines().collect();
    let lb: Vec<&str> = tb.lines().collect();
    assert_eq!(la.len(), 4);
    assert_eq!(la[0], lb[0]);
    assert_ne!(la[3], lb[3]);
    let first: Value = serde_json::from_str(la[0]).unwrap();
    for key in ["epoch", "loss", "train_acc", "val_acc", "test_acc", "mad", "omega"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert!(plain.join("summary.json").exists());
    assert_eq!(read_json(plain.join("manifest.json"))["command"], "train");
}

#[test]
fn sample_on_five_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("c5.json");
    write_graph(&graph, 5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)], 1.0);
    let out = dir.path().join("s");
    ok(&["sample", "--graph", s(&graph), "--path-len", "3", "--out", s(&out)]);
    let dump = read_json(out.join("negatives.json"));
    let negs = dump["negatives"].as_object().unwrap();
    assert_eq!(negs.len(), 5);
    for (anchor, list) in negs {
        let i: i64 = anchor.parse().unwrap();
        for v in list.as_array().unwrap() {
            let j = v.as_i64().unwrap();
            let d = (i - j).rem_euclid(5).min((j - i).rem_euclid(5));
            assert!(d >= 2);
        }
    }
}

#[test]
fn random_dumps_repeat_and_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = ["sample", "--per-block", "8", "--neg", "random", "--seed", "7"];
    ok(&[&args[..], &["--out", s(&a)]].concat());
    ok(&[&args[..], &["--out", s(&b)]].concat());
    assert_eq!(
        fs::read(a.join("negatives.json")).unwrap(),
        fs::read(b.join("negatives.json")).unwrap()
    );

    let v = dir.path().join("v");
    ok(&["sample", "--per-block", "8", "--verify", "--out", s(&v)]);
    let report = read_json(v.join("verify.json"));
    assert!(report["tv"].as_f64().unwrap() < 0.02);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&["train", "--no-such-flag"]), 2);
    assert_eq!(code(&["sample", "--kernel", "gaussian", "--out", s(&out)]), 2);
    assert_eq!(code(&["train", "--layers", "0", "--out", s(&out)]), 2);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"n\": 3, \"edges\": [[0, 7]]").unwrap();
    assert_eq!(code(&["sample", "--graph", s(&bad), "--out", s(&out)]), 3);
    assert_eq!(code(&["sample", "--graph", s(&dir.path().join("missing.json")), "--out", s(&out)]), 3);

    // an absurd step size overflows the weights after the first update
    let small = dir.path().join("small.json");
    write_graph(&small, 4, &[(0, 1), (1, 2), (2, 3)], 1.0);
    assert_eq!(
        code(&["train", "--graph", s(&small), "--neg", "none", "--epochs", "4", "--lr", "1e300", "--out", s(&out)]),
        4
    );
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"per-block": 3, "blocks": 2, "p_in": 1.0, "p_out": 0.0}"#).unwrap();
    let out = dir.path().join("g");
    let stdout = ok(&["generate", "--per-block", "20", "--config", s(&cfg), "--out", s(&out)]);
    assert!(stdout.contains("n=6 "), "{stdout}");
    let m = read_json(out.join("manifest.json"));
    assert_eq!(m["config"]["per_block"], 3);

    fs::write(&cfg, r#"{"colour": "blue"}"#).unwrap();
    assert_eq!(code(&["generate", "--config", s(&cfg), "--out", s(&out)]), 2);
}

#[test]
fn cost_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let stdout = ok(&["cost", "--nodes", "3327", "--avg-degree", "2.74", "--out", s(&out)]);
    assert!(stdout.contains("reduced_cost (pa*deg)^3=2571.4"), "{stdout}");
    let report = read_json(out.join("cost.json"));
    assert_eq!(report["full_cost"].as_f64().unwrap(), 3327f64.powi(3));
}
