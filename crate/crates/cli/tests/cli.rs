use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn vibe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vibe"))
        .args(args)
        .current_dir(dir)
        .env_remove("VIBE_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = vibe(dir, args);
    assert!(
        out.status.success(),
        "vibe {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "[synthetic]\nnum_garments = 120\n[vibe]\nepochs = 12\nschedule = [[8, 0.3]]\n[cf_aware]\nepochs = 25\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn gen_data_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["gen-data", "--out", "a", "--seed", "5"]);
    ok(tmp.path(), &["gen-data", "--out", "b", "--seed", "5"]);
    ok(tmp.path(), &["gen-data", "--out", "c", "--seed", "6"]);
    for file in ["catalog.txt", "oracle.txt", "planted.txt"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        assert_eq!(a, fs::read(tmp.path().join("b").join(file)).unwrap(), "{file}");
    }
    assert_ne!(
        fs::read(tmp.path().join("a/catalog.txt")).unwrap(),
        fs::read(tmp.path().join("c/catalog.txt")).unwrap()
    );
}

#[test]
fn train_then_eval_writes_three_scenarios_of_ten_runs() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data"]);
    let train = ok(d, &["train", "--method", "vibe"]);
    assert!(train.contains("180 epochs"), "{train}");
    let losses = fs::read_to_string(d.join("model.ckpt.loss")).unwrap();
    assert_eq!(losses.lines().filter(|l| !l.starts_with('#')).count(), 180);
    assert!(fs::read_to_string(d.join("model.ckpt")).unwrap().starts_with("# vibe checkpoint v1\n"));

    let table = ok(d, &["eval", "--method", "vibe"]);
    assert!(table.contains("vibe"), "{table}");
    let metrics = fs::read_to_string(d.join("metrics.txt")).unwrap();
    assert!(metrics.starts_with("# vibe metrics v1\n"));
    for scenario in ["i", "ii", "iii"] {
        let value = |key: &str| {
            let prefix = format!("vibe.scenario.{scenario}.{key}=");
            metrics
                .lines()
                .find_map(|l| l.strip_prefix(prefix.as_str()))
                .unwrap_or_else(|| panic!("missing {prefix}"))
                .to_string()
        };
        let mean: f64 = value("mean").parse().unwrap();
        let std: f64 = value("std").parse().unwrap();
        assert!((0.0..=1.0).contains(&mean) && std >= 0.0);
        assert_eq!(value("num_runs"), "10");
        let runs: Vec<f64> = value("runs").split(',').map(|r| r.parse().unwrap()).collect();
        assert_eq!(runs.len(), 10);
        assert!((runs.iter().sum::<f64>() / 10.0 - mean).abs() < 1e-12);
    }
}

#[test]
fn verify_passes_and_lists_every_check() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["verify"]);
    let passes: Vec<&str> = out.lines().filter(|l| l.starts_with("PASS ")).collect();
    assert_eq!(passes.len(), 5, "{out}");
    assert!(out.contains("gradient") && out.contains("AUC") && out.contains("propagation"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn eval_is_reproducible_across_job_counts() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let config = small_config(d);
    ok(d, &["--config", &config, "gen-data"]);
    let base = ["--config", config.as_str(), "eval", "--method", "vibe,cf-agnostic", "--runs", "2", "--quantiles", "100,50"];
    ok(d, &[&base[..], &["--out", "one.txt", "--jobs", "1"]].concat());
    ok(d, &[&base[..], &["--out", "two.txt", "--jobs", "2"]].concat());
    let one = fs::read_to_string(d.join("one.txt")).unwrap();
    assert_eq!(one, fs::read_to_string(d.join("two.txt")).unwrap());
    assert!(one.contains("cf-agnostic.scenario.iii.num_runs=2\n"));
    assert!(one.contains("vibe.quantile.50="));
}

#[test]
fn recommend_and_explain_leave_inputs_untouched() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let config = small_config(d);
    ok(d, &["--config", &config, "gen-data"]);
    ok(d, &["--config", &config, "cluster"]);
    ok(d, &["--config", &config, "train", "--clustering", "data/clustering.txt"]);
    let snapshot = |name: &str| fs::read(d.join(name)).unwrap();
    let before: Vec<Vec<u8>> = ["data/catalog.txt", "data/clustering.txt", "model.ckpt"].map(snapshot).to_vec();

    let recs = ok(d, &["--config", &config, "recommend", "--body-id", "b000", "--top", "4"]);
    assert_eq!(recs.lines().filter(|l| !l.starts_with('#')).count(), 4, "{recs}");

    // Two estimates of one body, aggregated by their median.
    let catalog = fs::read_to_string(d.join("data/catalog.txt")).unwrap();
    let line = catalog.lines().skip_while(|l| *l != "[bodies]").nth(1).unwrap().to_string();
    fs::write(d.join("me.txt"), format!("{line}\n{line}\n")).unwrap();
    let text = ok(d, &["--config", &config, "explain", "--body", "me.txt", "--top-k", "3"]);
    assert!(text.contains("suitable") && text.contains("probe accuracy"), "{text}");
    let kv = ok(d, &["--config", &config, "explain", "--body", "me.txt", "--format", "kv"]);
    assert!(kv.lines().all(|l| l.contains('=')), "{kv}");

    let after: Vec<Vec<u8>> = ["data/catalog.txt", "data/clustering.txt", "model.ckpt"].map(snapshot).to_vec();
    assert_eq!(before, after);
}

#[test]
fn failures_map_to_documented_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&vibe(d, &["train", "--no-such-flag"])), 1);
    assert_eq!(code(&vibe(d, &["frobnicate"])), 1);
    assert_eq!(code(&vibe(d, &["train", "--method", "svd"])), 1);
    assert_eq!(code(&vibe(d, &["train", "--data", "missing"])), 2);
    assert!(vibe(d, &["--help"]).status.success());

    fs::write(d.join("bad.toml"), "[vibe]\nlearnin_rate = 0.1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vibe"))
        .args(["verify"])
        .current_dir(d)
        .env("VIBE_CONFIG", d.join("bad.toml"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learnin_rate"));

    let config = small_config(d);
    ok(d, &["--config", &config, "gen-data"]);
    ok(d, &["--config", &config, "train", "--method", "cf-aware", "--out", "cf.ckpt"]);
    let explain = vibe(d, &["--config", &config, "explain", "--checkpoint", "cf.ckpt", "--body-id", "b000"]);
    assert_eq!(code(&explain), 1);
    assert_eq!(code(&vibe(d, &["recommend", "--checkpoint", "cf.ckpt", "--body-id", "nobody"])), 2);

    let mut text = fs::read_to_string(d.join("cf.ckpt")).unwrap();
    text.push_str("0.5\n");
    fs::write(d.join("broken.ckpt"), text).unwrap();
    let out = vibe(d, &["recommend", "--checkpoint", "broken.ckpt", "--body-id", "b000"]);
    assert_eq!(code(&out), 2);
}
