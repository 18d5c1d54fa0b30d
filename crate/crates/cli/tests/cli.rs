use std::path::Path;
use std::process::{Command, Output};

fn coisland(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_coisland"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "coisland {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tiny_config(dir: &Path) -> String {
    let text = String::from_utf8(coisland(&["config", "--preset", "smoke"]).stdout).unwrap();
    let mut cfg: toml::Table = text.parse().unwrap();
    let ppo = cfg["ppo"].as_table_mut().unwrap();
    ppo.insert("buffer_size".into(), 256.into());
    ppo.insert("batch_size".into(), 64.into());
    ppo.insert("n_envs".into(), 4.into());
    cfg["env"]
        .as_table_mut()
        .unwrap()
        .insert("max_episode_steps".into(), 100.into());
    cfg["net"]
        .as_table_mut()
        .unwrap()
        .insert("hidden".into(), toml::Value::Array(vec![16.into()]));
    cfg["train"]
        .as_table_mut()
        .unwrap()
        .insert("checkpoint_every".into(), 2.into());
    let path = dir.join("tiny.toml");
    std::fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_eval_grid_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();

    let out = coisland(&[
        "train",
        "--config",
        &config,
        "--out",
        run_s,
        "--timesteps",
        "1024",
        "--island",
        "heuristic",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["total_steps"], 1024);
    for f in [
        "config.toml",
        "checkpoint.json",
        "metrics.csv",
        "episodes.csv",
        "report.json",
        "checkpoints/update_00002.json",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }

    let ck = run.join("checkpoint.json");
    let eval_dir = dir.path().join("eval");
    let out = coisland(&[
        "eval",
        "--config",
        &config,
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
        "--episodes",
        "3",
        "--dump-trajectories",
    ]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["episodes"], 3);
    assert!(eval_dir.join("trajectories.jsonl").exists());

    let grid_dir = dir.path().join("grid");
    let out = coisland(&[
        "grid",
        "--config",
        &config,
        "--untrained",
        "--out",
        grid_dir.to_str().unwrap(),
        "--r",
        "4,7",
        "--c",
        "0.5",
        "--episodes",
        "2",
    ]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
    assert_eq!(std::fs::read_to_string(grid_dir.join("grid.csv")).unwrap().lines().count(), 3);
}

#[test]
fn bad_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[ppo]\nclipping = 0.1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_coisland"))
        .args([
            "train",
            "--config",
            bad.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("clipping"));

    let out = Command::new(env!("CARGO_BIN_EXE_coisland"))
        .args(["eval", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success(), "eval without a policy source must fail");
}
