use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "schedule": {"steps": 10},
  "net": {"hidden": [16], "embed_dim": 8},
  "pretrain": {"epochs": 3, "batch": 32},
  "finetune": {"iterations": 2, "samples": 32, "batch": 16},
  "svdd": {"M": 2, "n_traj": 20},
  "data": {"synthetic": {"rows": 200}}
}"#;

fn rdd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdd"))
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), SMALL).unwrap();
    dir
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

#[test]
fn stepwise_commands_write_their_outputs() {
    let dir = setup();
    let d = dir.path();
    ok(&rdd(d, &["pretrain", "-c", "cfg.json", "-o", "out"]));
    assert!(d.join("out/model.bin").exists());
    assert_eq!(fs::read_to_string(d.join("out/pretrain_loss.csv")).unwrap().lines().count(), 4);
    ok(&rdd(d, &["finetune", "-c", "cfg.json", "-o", "out"]));
    let hist = fs::read_to_string(d.join("out/finetune_history.csv")).unwrap();
    assert!(hist.starts_with("iteration,mean_reward,mean_loss\n"));
    assert_eq!(hist.lines().count(), 3);
    ok(&rdd(d, &["sample", "-c", "cfg.json", "-o", "out", "--M", "3", "--n-traj", "7", "--seed", "5"]));
    let samples = fs::read_to_string(d.join("out/samples.csv")).unwrap();
    assert!(samples.starts_with("x0,x1,reward\n"));
    assert_eq!(samples.lines().count(), 8);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/sample_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["m"], 3);
    assert!(summary["seconds"].as_f64().unwrap() >= 0.0);
    ok(&rdd(d, &["eval", "-c", "cfg.json", "-o", "out", "--samples", "out/samples.csv"]));
    assert!(d.join("out/stats.json").exists());
    assert!(d.join("out/density.csv").exists());
    let archived: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("out/config.json")).unwrap()).unwrap();
    // defaulted fields are echoed
    assert_eq!(archived["svdd"]["alpha"], 0.1);
    assert_eq!(archived["schedule"]["steps"], 10);
}

#[test]
fn pipeline_is_reproducible_across_thread_counts() {
    let dir = setup();
    let d = dir.path();
    let mut one = rdd(d, &["pipeline", "-c", "cfg.json", "-o", "a", "--threads", "1"]);
    ok(&one);
    one = rdd(d, &["pipeline", "-c", "cfg.json", "-o", "b", "--threads", "3"]);
    ok(&one);
    for f in ["samples.csv", "samples_pretrained.csv", "model.bin", "model_ft.bin"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn errors_have_exit_codes() {
    let dir = setup();
    let d = dir.path();
    let o = rdd(d, &["sample", "-c", "cfg.json", "-o", "empty"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.bin"));
    fs::write(d.join("bad.json"), r#"{"svdd": {"M": 0}}"#).unwrap();
    let o = rdd(d, &["pretrain", "-c", "bad.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("svdd.M"));
    assert_eq!(rdd(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(rdd(d, &["--help"]).status.code(), Some(0));
    fs::write(d.join("ragged.csv"), "x0,x1\n1,2\n3\n").unwrap();
    let o = rdd(d, &["eval", "-c", "cfg.json", "-o", "e", "--samples", "ragged.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":3:"));
}

#[test]
fn hull_and_surrogate_commands() {
    let dir = setup();
    let d = dir.path();
    let o = rdd(d, &["hull", "eval", "--params", "0.25,0.25,0.12,0.08,0.5,0.75"]);
    ok(&o);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 32);
    assert!(v["aggregate"].as_f64().unwrap() > 0.0);
    let o = rdd(d, &["hull", "eval", "--params", "0.7,0.7,0.12,0.08,0.5,0.75"]);
    assert_eq!(o.status.code(), Some(3));

    ok(&rdd(d, &["hull", "dataset", "--n", "60", "-o", "h"]));
    ok(&rdd(d, &["surrogate", "fit", "-o", "h", "--data", "h/hull_dataset.csv"]));
    assert!(d.join("h/surrogate.bin").exists());
    let o = rdd(d, &["surrogate", "eval", "-o", "h", "--model", "h/surrogate.bin", "--data", "h/hull_dataset.csv"]);
    ok(&o);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 60);
    assert!(v["r2"].as_f64().unwrap() > 0.5);
}
