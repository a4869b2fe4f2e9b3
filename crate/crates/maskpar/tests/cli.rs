use std::path::Path;
use std::process::{Command, Output};

fn maskpar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskpar")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = r#"{
  "model": {"input_size": 32, "stem_channels": 8, "stem_kernel": 3, "stages": 3, "blocks_per_stage": 1,
            "stage_channels": [8, 16, 16], "branch_widths": [32, 32, 16]},
  "train": {"learning_rate": 0.001, "epochs": 2, "dropout_p": 0.3}
}"#;

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = maskpar(dir.path(), &["gradcheck", "--frobnicate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = maskpar(dir.path(), &["--threads", "0", "gradcheck"]);
    assert!(!o.status.success());
}

#[test]
fn invalid_config_is_reported_as_such() {
    let dir = tempfile::tempdir().unwrap();
    assert!(maskpar(dir.path(), &["synth", "--spec", "default", "--out", "data"]).status.success());
    std::fs::write(dir.path().join("bad.json"), r#"{"train": {"learning_rate": -1.0}}"#).unwrap();
    let o = maskpar(
        dir.path(),
        &[
            "train",
            "--policy",
            "synthetic",
            "--manifest",
            "data/manifest.jsonl",
            "--config",
            "bad.json",
            "--out",
            "run",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("configuration error"), "{}", stderr(&o));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn synth_train_eval_infer_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = maskpar(d, &["synth", "--spec", "default", "--out", "data", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(d.join("cfg.json"), CONFIG).unwrap();
    let o = maskpar(
        d,
        &[
            "train",
            "--policy",
            "data/policy.json",
            "--manifest",
            "data/manifest.jsonl",
            "--config",
            "cfg.json",
            "--out",
            "run",
            "--threads",
            "4",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("mA over 10 attributes"));
    assert!(stderr(&o).contains("running serially"));

    let o = maskpar(
        d,
        &["eval", "--checkpoint", "run/best.ckpt", "--manifest", "data/manifest.jsonl", "--json", "eval.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("eval.json").is_file());

    let args = ["--checkpoint", "run/best.ckpt", "--image", "data/images/synth-00000.png"];
    let o = maskpar(d, &[&["infer"][..], &args, &["--mask", "data/masks/synth-00000.png"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 10);
    assert!(!stderr(&o).contains("WARN"));

    let blank = image::GrayImage::new(40, 64);
    blank.save(d.join("blank.png")).unwrap();
    let o = maskpar(d, &[&["infer"][..], &args, &["--mask", "blank.png"]].concat());
    assert!(o.status.success());
    assert!(stderr(&o).contains("no foreground"), "{}", stderr(&o));

    let o = maskpar(d, &[&["heatmap"][..], &args, &["--mask", "data/masks/synth-00000.png", "--out", "maps"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("maps/synth-00000.Head.after.png").is_file());
}

#[test]
fn gradcheck_passes_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = maskpar(dir.path(), &["gradcheck", "--cases", "1", "--seed", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn ablate_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let grid = r#"{"settings": [{"name": "a", "multi_task_heads": true, "multiplication_layer": true, "loss": "weighted_bce"}],
                   "protocol": {"train_samples": 16, "test_samples": 8, "seeds": [0]},
                   "train": {"epochs": 1, "learning_rate": 0.001}}"#;
    std::fs::write(dir.path().join("grid.json"), grid).unwrap();
    let o = maskpar(dir.path(), &["ablate", "--grid", "grid.json", "--out", "abl"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("abl/ablation.json").is_file());
    let o = maskpar(dir.path(), &["ablate", "--grid", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(1));
}
