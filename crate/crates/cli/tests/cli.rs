use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ssce_core::data::dataset::read_dataset;
use ssce_core::data::synthetic::SyntheticConfig;
use ssce_core::model::load_checkpoint;

fn ssce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssce")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ssce(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    ssce(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
[data]
kind = "synthetic"
n_envs = 40
seed = 3

[model]
kind = "ssce"
hidden_layers = 1
width = 8
towers = 2

[train]
iterations = 30
eval_period = 10
checkpoint_period = 15

[eval]
baselines = ["oracle", "scm", "rscm", "ka", "toeplitz"]
grid = [0.0, 0.25, 0.5, 0.75, 1.0]
global_scm_envs = 50
"#;

struct Setup {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn setup(config: &str) -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let path = root.join("run.toml");
    fs::write(&path, config).unwrap();
    Setup { _dir: dir, root, config: path }
}

#[test]
fn gen_writes_the_recipe_and_echoes_it() {
    let t = setup(SMALL);
    let data = t.root.join("data.bin");
    let out = ok(&["gen", "--config", s(&t.config), "--out", s(&data)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("40 windows"));
    let (header, pairs) = read_dataset(&data).unwrap();
    let expected = SyntheticConfig { n_envs: 40, seed: 3, ..SyntheticConfig::default() }.generate().unwrap();
    assert_eq!(pairs, expected);
    assert_eq!(header.config["data"]["kind"], "synthetic");
    assert_eq!(header.config["data"]["n_envs"], 40);
    assert_eq!(header.config["data"]["dirichlet_alpha"], 0.1);
    assert!(header.config["conventions"]["gram"].as_str().unwrap().contains("X^H X"));

    let reseeded = t.root.join("seed9.bin");
    ok(&["gen", "--config", s(&t.config), "--seed", "9", "--out", s(&reseeded)]);
    assert_eq!(read_dataset(&reseeded).unwrap().0.config["data"]["seed"], 9);
}

#[test]
fn validation_and_io_errors_have_distinct_codes() {
    let t = setup("[data]\nkind = \"synthetic\"\nn_envs = 0\n");
    let out = t.root.join("x.bin");
    assert_eq!(code(&["gen", "--config", s(&t.config), "--out", s(&out)]), 2);
    assert!(!out.exists());

    let bad = setup("[train]\nsteps = 3\n");
    assert_eq!(code(&["gen", "--config", s(&bad.config), "--out", s(&out)]), 2);
    assert_eq!(code(&["gen", "--config", s(&t.root.join("missing.toml")), "--out", s(&out)]), 3);
    assert_eq!(code(&["gen", "--paper", "--preset", "desk", "--out", s(&out)]), 2);

    let ka = setup("[ka_verify.data]\nnu = 5.0\n");
    let err = ssce(&["ka-verify", "--config", s(&ka.config), "--out", s(&ka.root.join("kv"))]);
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).contains("nu"));

    let junk = t.root.join("junk.bin");
    fs::write(&junk, b"not a dataset").unwrap();
    assert_eq!(code(&["train", "--data", s(&junk), "--out", s(&t.root.join("tr"))]), 3);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let t = setup(SMALL);
    let data = t.root.join("data.bin");
    ok(&["gen", "--config", s(&t.config), "--out", s(&data)]);
    let (a, b) = (t.root.join("a"), t.root.join("b"));
    for dir in [&a, &b] {
        ok(&["train", "--config", s(&t.config), "--data", s(&data), "--heldout", s(&data), "--out", s(dir)]);
    }
    let final_a = fs::read(a.join("checkpoint.bin")).unwrap();
    assert_eq!(final_a, fs::read(b.join("checkpoint.bin")).unwrap());
    assert!(a.join("checkpoint_00000015.bin").exists());
    let log = fs::read_to_string(a.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    let c = t.root.join("c");
    ok(&[
        "train",
        "--config",
        s(&t.config),
        "--data",
        s(&data),
        "--resume",
        s(&a.join("checkpoint_00000015.bin")),
        "--out",
        s(&c),
    ]);
    assert_eq!(fs::read(c.join("checkpoint.bin")).unwrap(), final_a);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(c.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["resumed_from"], 15);
    assert_eq!(load_checkpoint(&c.join("checkpoint.bin")).unwrap().iteration, 30);
}

#[test]
fn training_rejects_mismatched_dimensions() {
    let t = setup(SMALL);
    let ka = setup("[data]\nkind = \"ka\"\nn_envs = 5\n");
    let data = t.root.join("ka.bin");
    ok(&["gen", "--config", s(&ka.config), "--out", s(&data)]);
    let out = ssce(&["train", "--config", s(&t.config), "--data", s(&data), "--out", s(&t.root.join("m"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}

#[test]
fn eval_reports_every_estimator_and_is_reproducible() {
    let t = setup(SMALL);
    let data = t.root.join("data.bin");
    ok(&["gen", "--config", s(&t.config), "--out", s(&data)]);
    ok(&["train", "--config", s(&t.config), "--data", s(&data), "--out", s(&t.root.join("m"))]);
    let ckpt = t.root.join("m").join("checkpoint.bin");
    let (e1, e2) = (t.root.join("e1"), t.root.join("e2"));
    for dir in [&e1, &e2] {
        ok(&["eval", "--config", s(&t.config), "--data", s(&data), "--checkpoint", s(&ckpt), "--svg", "--out", s(dir)]);
    }
    let bytes = fs::read(e1.join("metrics.json")).unwrap();
    assert_eq!(bytes, fs::read(e2.join("metrics.json")).unwrap());
    let metrics: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    let names: Vec<&str> = metrics["reports"].as_array().unwrap().iter().map(|r| r["estimator"].as_str().unwrap()).collect();
    assert_eq!(names, ["ssce", "oracle", "scm", "rscm", "ka", "toeplitz"]);
    let oracle = &metrics["reports"][1];
    assert_eq!(oracle["mse"], 0.0);
    assert!(metrics["reports"][3]["tuned_alpha"]["nll"].is_number());
    assert_eq!(metrics["config"]["global_scm"]["kind"], "generated");
    for name in names {
        assert!(e1.join(format!("roc_{name}.csv")).exists());
    }
    assert!(fs::read_to_string(e1.join("roc.svg")).unwrap().contains("<polyline"));
    let timing: serde_json::Value = serde_json::from_slice(&fs::read(e1.join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing["timings"].as_array().unwrap().len(), 6);
}

#[test]
fn roc_command_summarises_score_files() {
    let t = setup("[roc]\nmax_fpr = 0.5\n");
    let (h0, h1) = (t.root.join("h0.csv"), t.root.join("h1.csv"));
    fs::write(&h0, "score\n0.1\n0.2\n0.3\n0.4\n").unwrap();
    fs::write(&h1, "0.35\n0.5\n").unwrap();
    let out = t.root.join("roc");
    ok(&["roc", "--config", s(&t.config), "--h0", s(&h0), "--h1", s(&h1), "--out", s(&out), "--svg"]);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("roc.json")).unwrap()).unwrap();
    assert_eq!(summary["max_fpr"], 0.5);
    assert_eq!(summary["n_h0"], 4);
    // Curve (0,0) (0,0.5) (0.25,0.5) (0.25,1) (0.5,1): area 0.25*0.5 + 0.25*1.
    assert!((summary["pauc_raw"].as_f64().unwrap() - 0.375).abs() < 1e-12);
    assert!(out.join("roc.csv").exists() && out.join("roc.svg").exists());

    fs::write(&h1, "0.35\nabc\n").unwrap();
    assert_eq!(code(&["roc", "--h0", s(&h0), "--h1", s(&h1), "--out", s(&out)]), 3);
    assert_eq!(code(&["roc", "--h0", s(&h0), "--h1", s(&h0), "--max-fpr", "1.5", "--out", s(&out)]), 2);
}

#[test]
fn ka_verify_reports_relative_errors() {
    let t = setup("[ka_verify]\nheldout_envs = 20\n[ka_verify.train]\niterations = 200\neval_period = 100\n");
    let out = t.root.join("kv");
    ok(&["ka-verify", "--config", s(&t.config), "--out", s(&out)]);
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(out.join("ka_verify.json")).unwrap()).unwrap();
    let report = &doc["report"];
    assert!((report["alpha_target"].as_f64().unwrap() - 0.04).abs() < 1e-15);
    assert!(report["alpha_rel_error"].is_number() && report["a_rel_error"].is_number());
    assert_eq!(doc["config"]["train"]["iterations"], 200);
}
