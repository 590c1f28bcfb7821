//! Integration tests of the command-line surface: exit codes, file
//! outputs, option handling, and the named schedule presets.

use std::path::Path;
use std::process::Command;

use segflow::config::ExperimentConfig;
use segflow::runner::{cmd_joint, cmd_train, CmdOptions};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_segflow")
}

fn base_config(out: &Path) -> String {
    format!(
        r#"{{
        "schema_version": 1,
        "target": {{"mixture": {{
            "weights": [1.0],
            "means": [[0.5]],
            "variances": [[1.0]],
            "condition_map": [[]]
        }}}},
        "conditions": {{"a": [], "b": []}},
        "transport": {{
            "variant": "A",
            "k": 4,
            "steps": 12,
            "density": {{"preset": "paper-image"}},
            "weights": {{"preset": "paper-image"}}
        }},
        "train": {{"batch_size": 32, "steps": 300, "learning_rate": 0.001, "hidden": [16, 16]}},
        "seeds": [0],
        "output_dir": "{}"
    }}"#,
        out.display()
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(bin()).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn train_writes_checkpoint_and_decreasing_loss() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg_path = write_config(dir.path(), &base_config(&out));
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let outcome = cmd_train(&cfg, &CmdOptions::default()).unwrap();
    assert!(outcome.checkpoint.exists());

    let csv = std::fs::read_to_string(out.join("loss_curve.csv")).unwrap();
    let losses: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 300);
    // Smoothed trend decreases: first-decile mean above last-decile mean.
    let head: f64 = losses[..30].iter().sum::<f64>() / 30.0;
    let tail: f64 = losses[270..].iter().sum::<f64>() / 30.0;
    assert!(tail < head, "loss trend not decreasing ({head} -> {tail})");

    // The checkpoint is immediately usable as a transport field.
    let joint_cfg = base_config(&out).replace(
        r#"{"mixture": {
            "weights": [1.0],
            "means": [[0.5]],
            "variances": [[1.0]],
            "condition_map": [[]]
        }}"#,
        r#"{"checkpoint": "out/checkpoint.bin"}"#,
    );
    let cfg_path2 = write_config(dir.path(), &joint_cfg);
    let cfg2 = ExperimentConfig::load(&cfg_path2).unwrap();
    cmd_joint(&cfg2, &CmdOptions::default()).unwrap();
    assert!(out.join("seed_0").join("trajectory.csv").exists());
}

#[test]
fn missing_target_section_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let broken = base_config(&dir.path().join("out")).replacen("\"target\"", "\"turget\"", 1);
    let cfg_path = write_config(dir.path(), &broken);
    let (code, _, stderr) = run(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(
        stderr.contains("target") || stderr.contains("turget"),
        "error must name the field: {stderr}"
    );
}

#[test]
fn dry_run_validates_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg_path = write_config(dir.path(), &base_config(&out));
    for cmd in ["train", "sample", "joint", "ablate", "diagnose"] {
        let (code, stdout, stderr) = run(&[
            cmd,
            "--config",
            cfg_path.to_str().unwrap(),
            "--dry-run",
        ]);
        assert_eq!(code, 0, "{cmd} dry-run failed: {stderr}");
        assert!(stdout.contains("dry-run"), "{cmd} should announce dry-run");
        assert!(stdout.contains("schema_version"), "{cmd} should print the resolved config");
    }
    assert!(!out.exists(), "dry runs must not write anything");
}

#[test]
fn unknown_variant_and_unknown_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_variant =
        base_config(&dir.path().join("out")).replace("\"variant\": \"A\"", "\"variant\": \"Q\"");
    let cfg_path = write_config(dir.path(), &bad_variant);
    let (code, _, stderr) = run(&["joint", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code, 2, "stderr: {stderr}");

    let unknown_key =
        base_config(&dir.path().join("out")).replace("\"k\": 4,", "\"k\": 4, \"qq\": 1,");
    let cfg_path = write_config(dir.path(), &unknown_key);
    let (code, _, stderr) = run(&["joint", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("qq"), "error must name the unknown key: {stderr}");
}

#[test]
fn corrupted_checkpoint_exits_2_naming_file() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("broken.ckpt");
    std::fs::write(&ckpt, b"not a checkpoint").unwrap();
    let cfg_text = base_config(&dir.path().join("out")).replace(
        r#"{"mixture": {
            "weights": [1.0],
            "means": [[0.5]],
            "variances": [[1.0]],
            "condition_map": [[]]
        }}"#,
        r#"{"checkpoint": "broken.ckpt"}"#,
    );
    let cfg_path = write_config(dir.path(), &cfg_text);
    let (code, _, stderr) = run(&["joint", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("broken.ckpt"), "error must name the file: {stderr}");
}

#[test]
fn zeroed_tolerance_forces_diagnose_exit_4_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg_text = base_config(&out).replace(
        "\"seeds\": [0],",
        "\"seeds\": [0], \"tolerances\": {\"gradcheck_rel\": 0.0},",
    );
    let cfg_path = write_config(dir.path(), &cfg_text);
    let (code, _, _) = run(&["diagnose", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code, 4);
    // The report is still written, with the failing check recorded.
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], false);
    let gradcheck = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["check"] == "gradcheck")
        .unwrap();
    assert_eq!(gradcheck["pass"], false);
}

#[test]
fn image_schedule_preset_drives_logged_weights() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg_text = base_config(&out)
        .replace("\"steps\": 12,", "\"steps\": 28,")
        .replace(
            r#""weights": {"preset": "paper-image"}"#,
            r#""weights": {"preset": "paper-image-schedule"}"#,
        );
    let cfg_path = write_config(dir.path(), &cfg_text);
    let (code, _, stderr) = run(&["joint", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let csv = std::fs::read_to_string(out.join("seed_0").join("trajectory.csv")).unwrap();
    let w_of_step: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(w_of_step.len(), 28);
    assert_eq!(w_of_step[0], 0.7);
    assert_eq!(w_of_step[6], 0.7);
    assert_eq!(w_of_step[7], 0.5);
    assert_eq!(w_of_step[8], 0.4);
    assert_eq!(w_of_step[9], 0.1);
    assert_eq!(w_of_step[27], 0.1);
}

#[test]
fn variant_d_cutoff_zero_gives_independent_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg_text = base_config(&out)
        .replace(
            r#""weights": [1.0],
            "means": [[0.5]],
            "variances": [[1.0]],
            "condition_map": [[]]"#,
            r#""weights": [0.5, 0.5],
            "means": [[1.5, 0.0], [-1.5, 0.0]],
            "variances": [[0.09, 0.09], [0.09, 0.09]],
            "condition_map": [[3.0], [0.0]]"#,
        )
        .replace(r#""a": [], "b": []"#, r#""a": [1.0], "b": [-1.0]"#)
        .replace("\"variant\": \"A\"", "\"variant\": \"D\"")
        .replace("\"k\": 4,", "\"k\": 4, \"cutoff_step\": 0,")
        .replace("\"seeds\": [0]", "\"seeds\": [0, 1]");
    let cfg_path = write_config(dir.path(), &cfg_text);
    let (code, _, stderr) = run(&["joint", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let agg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("aggregate.json")).unwrap())
            .unwrap();
    let seeds = agg["seeds"].as_array().unwrap();
    assert_eq!(seeds.len(), 2);
    for entry in seeds {
        // Independent conditional trajectories from the shared init: the
        // endpoints differ from each other.
        assert!(entry["final_norm"].as_f64().unwrap() > 0.1);
    }
    assert_ne!(seeds[0]["final_a"], seeds[1]["final_a"]);
}

#[test]
fn seed_and_out_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let elsewhere = dir.path().join("elsewhere");
    let cfg_path = write_config(dir.path(), &base_config(&out));
    let (code, _, stderr) = run(&[
        "joint",
        "--config",
        cfg_path.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        elsewhere.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(!out.exists());
    assert!(elsewhere.join("seed_5").join("trajectory.csv").exists());
    assert!(!elsewhere.join("seed_0").exists());
}

#[test]
fn thread_cap_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg_text = base_config(&out).replace("\"seeds\": [0]", "\"seeds\": [0, 1, 2, 3]");
    let cfg_path = write_config(dir.path(), &cfg_text);
    let mut aggregates = Vec::new();
    for threads in ["1", "4"] {
        let sub = dir.path().join(format!("threads_{threads}"));
        let status = Command::new(bin())
            .args([
                "joint",
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                sub.to_str().unwrap(),
            ])
            .env("SEGFLOW_THREADS", threads)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
        aggregates.push(std::fs::read(sub.join("aggregate.json")).unwrap());
    }
    assert_eq!(aggregates[0], aggregates[1]);
}

#[test]
fn training_divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg_text = base_config(&out).replace(
        r#""train": {"batch_size": 32, "steps": 300, "learning_rate": 0.001, "hidden": [16, 16]}"#,
        r#""train": {"batch_size": 4, "steps": 300, "learning_rate": 1e18, "optimizer": "sgd", "hidden": [16, 16]}"#,
    );
    let cfg_path = write_config(dir.path(), &cfg_text);
    let (code, _, stderr) = run(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code, 3, "stderr: {stderr}");
    assert!(stderr.contains("step"), "divergence should report the step: {stderr}");
}

#[test]
fn usage_and_bad_arguments() {
    let (code, stdout, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("USAGE"));

    let (code, _, stderr) = run(&["joint"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("--config"));

    let (code, _, _) = run(&["frobnicate", "--config", "nope.json"]);
    assert_eq!(code, 2);
}
