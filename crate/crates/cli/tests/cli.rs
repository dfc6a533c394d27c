use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use disentaforge_cli::{resolve_config, Cli, RunConfig};
use serde_json::Value;
use tempfile::tempdir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disentaforge")).args(args).output().expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON ({e}): {line}"))
}

fn tiny_corpus(dir: &Path) {
    let data = dir.join("data");
    let out = bin(&["gen-data", "--out", data.to_str().unwrap(), "--groups", "2", "--test-groups", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tiny_train(dir: &Path, run: &str, steps: &str, extra: &[&str]) -> Output {
    let data = dir.join("data");
    let out = dir.join(run);
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--steps",
        steps,
        "--d",
        "8",
        "--classifier-hidden",
        "8",
    ];
    args.extend_from_slice(extra);
    bin(&args)
}

#[test]
fn help_exits_zero() {
    let out = bin(&["train", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = bin(&["eval", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn defaults_without_file_or_flags() {
    let c = resolve_config(None, &[]).unwrap();
    assert_eq!(c, RunConfig::default());
    assert_eq!(c.train.weights.lambda1, 5.0);
    assert_eq!(c.train.weights.as_array(), [5.0, 0.1, 0.5, 0.5]);
    assert_eq!(c.train.lr, 1e-4);
}

#[test]
fn flag_overrides_file() {
    let dir = tempdir().unwrap();
    let file = dir.path().join("c.json");
    fs::write(&file, r#"{"train": {"lr": 0.0001, "steps": 7}}"#).unwrap();
    let cli = Cli::try_parse_from(["disentaforge", "train", "--config", file.to_str().unwrap(), "--lr", "0.001"]).unwrap();
    let c = resolve_config(cli.config.as_deref(), &cli.command.overrides()).unwrap();
    assert_eq!(c.train.lr, 0.001);
    assert_eq!(c.train.steps, 7);
}

#[test]
fn negative_lr_is_a_usage_error() {
    let out = bin(&["train", "--lr", "-0.5", "--data", "nowhere", "--out", "nowhere"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("lr"));
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempdir().unwrap();
    let file = dir.path().join("c.json");
    fs::write(&file, r#"{"train": {"lr": "fast"}}"#).unwrap();
    let out = bin(&["train", "--config", file.to_str().unwrap(), "--data", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("train.lr"));

    fs::write(&file, r#"{"model": {"width": 3}}"#).unwrap();
    let out = bin(&["train", "--config", file.to_str().unwrap(), "--data", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("model.width"));

    fs::write(&file, r#"{"train": {"lr": 1e-4,, }}"#).unwrap();
    let out = bin(&["train", "--config", file.to_str().unwrap(), "--data", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_corpus_is_a_runtime_error() {
    let dir = tempdir().unwrap();
    let out = bin(&["train", "--data", dir.path().join("absent").to_str().unwrap(), "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "runtime");
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    tiny_corpus(root);
    assert!(root.join("data/manifest.json").is_file());
    assert!(root.join("data/config.json").is_file());

    let file = root.join("c.json");
    fs::write(&file, r#"{"train": {"lr": 0.0001, "weights": {"lambda3": 0.0}}}"#).unwrap();
    let out = tiny_train(root, "run", "2", &["--config", file.to_str().unwrap(), "--lr", "0.001"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // The echoed config is the resolved one.
    let echoed: RunConfig = serde_json::from_str(&fs::read_to_string(root.join("run/config.json")).unwrap()).unwrap();
    assert_eq!(echoed.train.lr, 0.001);
    assert_eq!(echoed.train.weights.lambda3, 0.0);
    assert_eq!(echoed.train.steps, 2);

    // With lambda3 = 0 the contrastive terms contribute nothing to the total.
    let w = echoed.train.weights;
    for line in fs::read_to_string(root.join("run/log.jsonl")).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let f = |k: &str| v[k].as_f64().unwrap();
        assert!(f("con_real") != 0.0 || f("con_fake") != 0.0);
        let without_con = w.lambda1 * f("bce") + w.lambda2 * (f("rec_self") + f("rec_cross")) + w.lambda4 * f("info");
        assert!((f("total") - without_con).abs() < 1e-4 * f("total").abs().max(1.0), "{line}");
    }

    let ckpt = root.join("run/ckpt-2");
    let data = root.join("data");
    let report = root.join("run/report.json");
    let out = bin(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for split in ["test_in", "test_cross"] {
        let auc = r["splits"][split]["frame_auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
    }
    assert!(root.join("run/report.config.json").is_file());

    let emb = root.join("run/emb.csv");
    let out = bin(&[
        "export-emb",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--kinds",
        "id_pure1,art_pure1",
        "--out",
        emb.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&emb).unwrap();
    assert!(text.starts_with("sample_id,label,method,kind,v0,"));

    let svg = root.join("plots/emb.svg");
    let out = bin(&["plot", "--emb", emb.to_str().unwrap(), "--out", svg.to_str().unwrap(), "--epochs", "100"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let out = bin(&["export-emb", "--ckpt", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap(), "--kinds", "nose", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_only_inside_its_out_dir() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    tiny_corpus(root);
    let before: Vec<_> = walk(root);
    let out = tiny_train(root, "run", "2", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let after = walk(root);
    for p in &after {
        assert!(before.contains(p) || p.starts_with(root.join("run")), "unexpected write {}", p.display());
    }
}

#[test]
fn resume_continues_the_log() {
    let dir = tempdir().unwrap();
    let root = dir.path();
    tiny_corpus(root);
    assert!(tiny_train(root, "run", "2", &[]).status.success());
    let ckpt = root.join("run/ckpt-2");
    let out = tiny_train(root, "run", "3", &["--resume", ckpt.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let steps: Vec<u64> = fs::read_to_string(root.join("run/log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["step"].as_u64().unwrap())
        .collect();
    assert_eq!(steps, vec![0, 1, 2]);
    assert!(root.join("run/ckpt-3").is_file());
}

fn walk(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            for e in fs::read_dir(&p).unwrap() {
                stack.push(e.unwrap().path());
            }
        } else {
            out.push(p);
        }
    }
    out
}
