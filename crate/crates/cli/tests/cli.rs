use std::path::Path;
use std::process::{Command, Output};

fn eve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eve")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&eve(&["--help"])), 0);
    assert_eq!(code(&eve(&["--version"])), 0);
    assert_eq!(code(&eve(&[])), 1);
    assert_eq!(code(&eve(&["train", "--bogus"])), 1);
    assert_eq!(code(&eve(&["frobnicate"])), 1);
}

#[test]
fn stats_of_empty_file_is_all_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("train.jsonl");
    std::fs::write(&file, "").unwrap();
    let out = eve(&["stats", p(&file)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("train"));
    for row in ["#Image", "#Entailment", "#Neutral", "#Contradiction", "Vocabulary"] {
        let line = text.lines().find(|l| l.starts_with(row)).unwrap();
        assert_eq!(line.split_whitespace().nth(1), Some("0"), "{line}");
    }
}

#[test]
fn stats_rejects_malformed_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("x.jsonl");
    std::fs::write(&file, "not a header\n").unwrap();
    let out = eve(&["stats", p(&file)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("x.jsonl:1"), "{}", stderr(&out));
    assert_eq!(code(&eve(&["stats", p(&dir.path().join("missing.jsonl"))])), 2);
}

fn tiny_config(dir: &Path, task: &Path, variant: &str) -> std::path::PathBuf {
    let config = serde_json::json!({
        "epochs": 2,
        "batch_size": 16,
        "learning_rate": 0.01,
        "embedding_dim": 8,
        "seed": 3,
        "model": {
            "variant": variant,
            "gru_hidden": 12,
            "attention_dim": 6,
            "region_value_dim": 12,
            "fusion_dim": 12,
            "mlp_hidden": 12,
            "relation_hidden": 12
        },
        "paths": {
            "train": task.join("train.jsonl"),
            "val": task.join("val.jsonl"),
            "features": task.join("features"),
            "embeddings": task.join("embeddings.txt"),
            "output": dir.join("run")
        }
    });
    let path = dir.join("train.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

fn synth(task: &Path) {
    let dir = task.parent().unwrap();
    let config = dir.join("synth.json");
    std::fs::write(&config, r#"{"embedding_dim": 8}"#).unwrap();
    let out = eve(&["synth", "--out", p(task), "--config", p(&config), "--train", "30", "--val", "9", "--test", "9"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("hypothesis-only ceiling"));
}

#[test]
fn synth_train_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let task = dir.path().join("task");
    synth(&task);
    let config = tiny_config(dir.path(), &task, "EVE_IMAGE");

    let out = eve(&["train", "--config", p(&config), "--epochs", "3", "--quiet"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = dir.path().join("run");
    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains(r#""event":"epoch""#)).count(), 3);
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["epochs"], 3);

    let ckpt = run.join("best.veft");
    for split in ["val", "test"] {
        let out = eve(&[
            "eval",
            "--checkpoint",
            p(&ckpt),
            "--data",
            p(&task.join(format!("{split}.jsonl"))),
            "--features",
            p(&task.join("features")),
            "--out",
            p(&dir.path().join(format!("{split}.json"))),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).starts_with(&format!("EVE-Image on {split}: accuracy")), "{}", stdout(&out));
    }

    let out = eve(&["report", p(&dir.path().join("val.json")), p(&dir.path().join("test.json"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.lines().next().unwrap().contains("Model Name"));
    assert!(table.lines().nth(2).unwrap().starts_with("| EVE-Image"));

    let out = eve(&["report", p(&dir.path().join("val.json"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no test report"));
}

#[test]
fn train_with_missing_features_lists_offenders() {
    let dir = tempfile::tempdir().unwrap();
    let task = dir.path().join("task");
    synth(&task);
    let train = task.join("train.jsonl");
    let mut text = std::fs::read_to_string(&train).unwrap();
    for id in ["777.jpg", "778.jpg"] {
        text.push_str(&format!(r#"{{"pair_id":"x{id}","image_id":"{id}","hypothesis":"a dog is running","label":"neutral"}}"#));
        text.push('\n');
    }
    std::fs::write(&train, text).unwrap();
    let config = tiny_config(dir.path(), &task, "EVE_IMAGE");
    let out = eve(&["train", "--config", p(&config)]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("777.jpg") && err.contains("778.jpg") && err.contains("2 image(s)"), "{err}");
    assert!(!dir.path().join("run").exists());
}

#[test]
fn train_config_errors_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"epochs": 1, "learning_rat": 0.1}"#).unwrap();
    let out = eve(&["train", "--config", p(&config)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("learning_rat"), "{}", stderr(&out));
    assert_eq!(code(&eve(&["train", "--variant", "NOT_A_MODEL"])), 1);
    assert_eq!(code(&eve(&["train"])), 1);
}

#[test]
fn hypothesis_only_trains_without_features() {
    let dir = tempfile::tempdir().unwrap();
    let task = dir.path().join("task");
    synth(&task);
    let config = tiny_config(dir.path(), &task, "HYPOTHESIS_ONLY");
    let out = eve(&["train", "--config", p(&config), "--quiet"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = eve(&["eval", "--checkpoint", p(&dir.path().join("run/best.veft")), "--data", p(&task.join("test.jsonl"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("Hypothesis Only on test"));
}

#[test]
fn build_dataset_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let rec = |pair: &str, caption: &str, gold: &str| {
        format!(r#"{{"sentence1":"p","sentence2":"A dog, running.","gold_label":"{gold}","captionID":"{caption}","pairID":"{pair}"}}"#)
    };
    let snli = dir.path().join("snli.jsonl");
    std::fs::write(
        &snli,
        [rec("1", "1.jpg#0", "entailment"), rec("2", "2.jpg#0", "neutral"), rec("3", "3.jpg#1", "-"), rec("4", "9.jpg#0", "neutral")]
            .join("\n"),
    )
    .unwrap();
    for (name, ids) in [("tr.txt", "1.jpg\n"), ("va.txt", "2.jpg\n"), ("te.txt", "3.jpg\n")] {
        std::fs::write(dir.path().join(name), ids).unwrap();
    }
    let out_dir = dir.path().join("ve");
    let out = eve(&[
        "build-dataset",
        "--snli",
        p(&snli),
        "--train-images",
        p(&dir.path().join("tr.txt")),
        "--val-images",
        p(&dir.path().join("va.txt")),
        "--test-images",
        p(&dir.path().join("te.txt")),
        "--out",
        p(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("kept 2 examples, 1 without consensus, 1 on unlisted images"), "{}", stdout(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("build_report.json")).unwrap()).unwrap();
    assert_eq!(report["dropped_unlisted_images"], 1);

    let out = eve(&["stats", "--json", p(&out_dir.join("train.jsonl")), p(&out_dir.join("test.jsonl"))]);
    assert_eq!(code(&out), 0);
    let stats: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(stats["splits"][0][1]["entailment"], 1);
    assert_eq!(stats["splits"][0][1]["vocabulary"], 5);
    assert_eq!(stats["splits"][1][1]["images"], 0);

    std::fs::write(dir.path().join("va.txt"), "1.jpg\n").unwrap();
    let out = eve(&[
        "build-dataset",
        "--snli",
        p(&snli),
        "--train-images",
        p(&dir.path().join("tr.txt")),
        "--val-images",
        p(&dir.path().join("va.txt")),
        "--test-images",
        p(&dir.path().join("te.txt")),
        "--out",
        p(&out_dir),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn gradcheck_passes() {
    let out = eve(&["gradcheck"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!stdout(&out).contains("FAIL"));
    let out = eve(&["gradcheck", "--json"]);
    let results: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(results.as_array().unwrap().iter().all(|r| r["passed"] == true));
}
