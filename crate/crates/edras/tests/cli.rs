//! CLI smoke tests: a tiny end-to-end train / oracle / compare cycle plus
//! exit-code behavior on bad input.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edras"))
}

fn toy_config(dir: &std::path::Path) -> std::path::PathBuf {
    let out = dir.join("out");
    let text = format!(
        r#"
[run]
preset = "ac1d_periodic"
strategy = "edras_topm"
seed = 7
output_dir = "{}"

[plan]
endpoints = [0.05, 0.1]
hidden_layers = 2
width = 12
adam_epochs = 20
batch_size = 32
lbfgs_max_iters = 40
resample_every = 10
resample_m = 10
resample_budget = 20
n_interior = 80
n_boundary = 16
n_initial = 40
interior_cap = 200

[oracle]
nx = 64
dt = 1e-4
nr = 16
ntheta = 16
dt_2d = 1e-4
"#,
        out.display()
    );
    let path = dir.join("toy.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn train_oracle_compare_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    for sub in ["train", "oracle", "compare"] {
        let out = bin().arg(sub).arg("--config").arg(&cfg).output().unwrap();
        assert!(
            out.status.success(),
            "{sub} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = dir.path().join("out");
    for artifact in [
        "checkpoints/segment_000.json",
        "checkpoints/segment_001.json",
        "csv/loss_history.csv",
        "csv/sampling_log.csv",
        "csv/metrics.csv",
        "report.json",
        "oracle.json",
    ] {
        assert!(out.join(artifact).exists(), "missing artifact {artifact}");
    }
}

#[test]
fn missing_config_exits_2() {
    let out = bin().arg("train").arg("--config").arg("/nonexistent.toml").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[run]\npreset = \"nope\"\n").unwrap();
    let out = bin().arg("train").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
