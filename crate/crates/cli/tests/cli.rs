//! End-to-end checks that drive the installed binary the way a user would:
//! generate a dataset, train, evaluate, rescore, ablate, and hit every
//! documented exit code.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cycleground"));
    // The env override must not leak into determinism checks.
    c.env_remove("CYCLEGROUND_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary spawns")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const TINY_CONFIG: &str = r#"{
  "seed": 7,
  "max_epochs": 3,
  "pretrain_epochs": 1,
  "batch_size": 8,
  "learning_rate": 0.002,
  "embed": 12,
  "hidden": 16,
  "box_embed": 4,
  "plateau_patience": 50,
  "max_generate_len": 12
}"#;

/// One shared dataset and trained run; built once per test process.
struct Fixture {
    // Kept alive so the directory outlives every test.
    _dir: tempfile::TempDir,
    data: PathBuf,
    config: PathBuf,
    run: PathBuf,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let data = dir.path().join("data");
        let config = dir.path().join("config.json");
        let run = dir.path().join("run");
        run_ok(&[
            "gen-data",
            "--out",
            data.to_str().unwrap(),
            "--train-scenes",
            "6",
            "--val-scenes",
            "2",
            "--test-scenes",
            "2",
            "--scene-regions",
            "5",
        ]);
        fs::write(&config, TINY_CONFIG).unwrap();
        run_ok(&[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            run.to_str().unwrap(),
        ]);
        Fixture {
            _dir: dir,
            data,
            config,
            run,
        }
    })
}

#[test]
fn gen_data_writes_dataset_files_and_manifest() {
    let f = fixture();
    for name in [
        "worldspec.json",
        "vocab.json",
        "train.jsonl",
        "val.jsonl",
        "test.jsonl",
        "manifest.json",
    ] {
        assert!(f.data.join(name).is_file(), "missing {name}");
    }
    let manifest = read_json(&f.data.join("manifest.json"));
    assert_eq!(manifest["command"], "gen-data");
    let hash = manifest["dataset_sha256"].as_str().expect("dataset hash");
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert!(manifest["seeds"]["world"].is_u64());
    let spec = read_json(&f.data.join("worldspec.json"));
    assert_eq!(spec["train_scenes"], 6);
    assert_eq!(spec["scene_regions"], 5);
}

#[test]
fn train_writes_checkpoint_log_report_and_manifest() {
    let f = fixture();
    let log = fs::read_to_string(f.run.join("train_log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 1 + 3, "header plus one row per epoch");
    assert!(lines[0].starts_with("epoch,phase,lr,"));
    assert!(lines[1].starts_with("1,warmup,"));
    assert!(lines[3].starts_with("3,cycle,"));

    let checkpoint = read_json(&f.run.join("checkpoint.json"));
    assert!(checkpoint["tensors"].is_array());

    let report = read_json(&f.run.join("val_report.json"));
    assert_eq!(report["sentences"], 2);
    for key in ["bleu1", "f1_loc_per_sent", "macro_f1_all"] {
        let v = report[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }

    let manifest = read_json(&f.run.join("manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert!(manifest["dataset_sha256"].is_string());
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    for name in ["checkpoint.json", "train_log.csv", "val_report.json"] {
        assert!(outputs.contains(&name), "manifest misses {name}");
    }
}

#[test]
fn checkpoint_eval_writes_report_and_predictions() {
    let f = fixture();
    let out = f._dir.path().join("eval_ckpt");
    let stdout = run_ok(&[
        "eval",
        "--data",
        f.data.to_str().unwrap(),
        "--checkpoint",
        f.run.join("checkpoint.json").to_str().unwrap(),
        "--split",
        "test",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&stdout.stdout).to_string();
    assert!(text.contains("sentences"), "summary missing: {text}");

    let report = read_json(&out.join("report.json"));
    assert_eq!(report["sentences"], 2);
    assert!(report["attention_accuracy_decoder"].is_f64());
    assert!(report["attention_accuracy_localizer"].is_f64());

    let preds = fs::read_to_string(out.join("predictions.jsonl")).unwrap();
    let lines: Vec<&str> = preds.lines().collect();
    assert_eq!(lines.len(), 2, "one record per test scene");
    for line in lines {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(rec["scene_id"].is_u64());
        assert_eq!(
            rec["tokens"].as_array().unwrap().len(),
            rec["attended_boxes"].as_array().unwrap().len()
        );
    }
    assert!(out.join("report.csv").is_file());
}

#[test]
fn rescoring_own_predictions_reproduces_grounding_scores() {
    let f = fixture();
    let first = f._dir.path().join("rescore_a");
    run_ok(&[
        "eval",
        "--data",
        f.data.to_str().unwrap(),
        "--checkpoint",
        f.run.join("checkpoint.json").to_str().unwrap(),
        "--out-dir",
        first.to_str().unwrap(),
    ]);
    let second = f._dir.path().join("rescore_b");
    run_ok(&[
        "eval",
        "--data",
        f.data.to_str().unwrap(),
        "--predictions",
        first.join("predictions.jsonl").to_str().unwrap(),
        "--out-dir",
        second.to_str().unwrap(),
    ]);
    let a = read_json(&first.join("report.json"));
    let b = read_json(&second.join("report.json"));
    for key in [
        "sentences",
        "bleu1",
        "bleu4",
        "macro_f1_all",
        "macro_f1_loc",
        "f1_all_per_sent",
        "f1_loc_per_sent",
    ] {
        assert_eq!(a[key], b[key], "{key} drifted in rescoring");
    }
    // Interchange records carry no attention internals.
    assert!(b["attention_accuracy_decoder"].is_null());
    assert!(b["attention_accuracy_localizer"].is_null());
}

#[test]
fn identical_runs_match_bytewise_across_thread_counts() {
    let f = fixture();
    let one = f._dir.path().join("det_one_thread");
    let two = f._dir.path().join("det_two_threads");
    for (dir, threads) in [(&one, "1"), (&two, "2")] {
        run_ok(&[
            "--threads",
            threads,
            "train",
            "--data",
            f.data.to_str().unwrap(),
            "--config",
            f.config.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
    }
    for name in ["train_log.csv", "checkpoint.json", "val_report.json"] {
        let a = fs::read(one.join(name)).unwrap();
        let b = fs::read(two.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between thread counts");
        // The fixture run used the default thread count; same bytes again.
        let c = fs::read(f.run.join(name)).unwrap();
        assert_eq!(a, c, "{name} differs from the default-thread run");
    }
}

#[test]
fn refusing_to_overwrite_without_force_exits_2() {
    let f = fixture();
    let code = exit_code(&[
        "train",
        "--data",
        f.data.to_str().unwrap(),
        "--config",
        f.config.to_str().unwrap(),
        "--out-dir",
        f.run.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    let code = exit_code(&["gen-data", "--out", f.data.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn missing_dataset_exits_3() {
    let f = fixture();
    let out = f._dir.path().join("never_written");
    let code = exit_code(&[
        "eval",
        "--data",
        "/nonexistent/dataset",
        "--checkpoint",
        f.run.join("checkpoint.json").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3);
    assert!(!out.exists(), "failed eval must not leave outputs");
}

#[test]
fn invalid_config_values_exit_2() {
    let f = fixture();
    let out = f._dir.path().join("never_trained");
    let code = exit_code(&[
        "train",
        "--data",
        f.data.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--dropout",
        "1.5",
    ]);
    assert_eq!(code, 2);

    let bad = f._dir.path().join("bad_config.json");
    fs::write(&bad, "{\"max_epochs\": \"many\"}").unwrap();
    let code = exit_code(&[
        "train",
        "--data",
        f.data.to_str().unwrap(),
        "--config",
        bad.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);

    // Both eval input modes at once is a usage error.
    let code = exit_code(&[
        "eval",
        "--data",
        f.data.to_str().unwrap(),
        "--checkpoint",
        "a.json",
        "--predictions",
        "b.jsonl",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn gradient_check_passes_and_flags_a_planted_bug() {
    let f = fixture();
    let ok = run_ok(&["gradcheck", "--seed", "3"]);
    let text = String::from_utf8_lossy(&ok.stdout).to_string();
    assert!(text.contains("pass"), "{text}");

    let json_path = f._dir.path().join("gradcheck_bug.json");
    let out = bin()
        .args([
            "gradcheck",
            "--seed",
            "3",
            "--inject-bug",
            "--json",
            json_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "planted bug must exit 4");
    let reports = read_json(&json_path);
    let runs = reports.as_array().unwrap();
    assert!(!runs.is_empty());
    assert!(
        runs.iter().any(|r| r["report"]["pass"] == false),
        "no report recorded the failure"
    );
}

#[test]
fn ablation_grid_runs_and_tabulates_sorted_rows() {
    let f = fixture();
    let grid = f._dir.path().join("grid.json");
    fs::write(
        &grid,
        r#"[
          {"seed": 1, "lambda_decode": 1.0, "lambda_reconstruct": 0.0, "max_epochs": 2},
          {"seed": 2, "lambda_decode": 0.5, "lambda_reconstruct": 0.5, "max_epochs": 2},
          {"seed": 1, "lambda_decode": 0.5, "lambda_reconstruct": 0.5, "max_epochs": 2}
        ]"#,
    )
    .unwrap();
    let out = f._dir.path().join("ablation");
    run_ok(&[
        "ablate",
        "--data",
        f.data.to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
        "--base-config",
        f.config.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);

    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    let lines: Vec<&str> = runs.lines().collect();
    assert_eq!(lines.len(), 4, "header plus three cells");
    assert_eq!(lines[0].split(',').count(), 21);
    // Sorted by decode weight, then seed: both (0.5, 0.5) cells first.
    let field = |line: &str, k: usize| line.split(',').nth(k).unwrap().to_string();
    assert_eq!(field(lines[1], 2), "0.5");
    assert_eq!(field(lines[1], 8), "1");
    assert_eq!(field(lines[2], 2), "0.5");
    assert_eq!(field(lines[2], 8), "2");
    assert_eq!(field(lines[3], 2), "1.0");
    for line in &lines[1..] {
        assert_eq!(field(line, 1), "ok");
    }

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3, "two settings after grouping");
    for cell in ["cell_000", "cell_001", "cell_002"] {
        assert!(out.join(cell).join("checkpoint.json").is_file());
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["cells"], 3);
    assert_eq!(manifest["config"]["failed"], 0);
}

#[test]
fn malformed_grid_cell_is_rejected_before_any_training() {
    let f = fixture();
    let grid = f._dir.path().join("bad_grid.json");
    fs::write(
        &grid,
        r#"[{"seed": 1}, {"dropout": 2.0}]"#,
    )
    .unwrap();
    let out = f._dir.path().join("ablation_rejected");
    let run = bin()
        .args([
            "ablate",
            "--data",
            f.data.to_str().unwrap(),
            "--grid",
            grid.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&run.stderr).to_string();
    assert!(stderr.contains("cell 1"), "error names the bad cell: {stderr}");
    assert!(!out.exists(), "rejected grid must not create the out dir");
}

#[test]
fn zero_threads_is_a_usage_error() {
    assert_eq!(exit_code(&["--threads", "0", "gradcheck"]), 2);
    let code = bin()
        .env("CYCLEGROUND_THREADS", "banana")
        .args(["gradcheck"])
        .output()
        .unwrap()
        .status
        .code();
    assert_eq!(code, Some(2));
}
