//! End-to-end tests of the `temprel` binary: stage wiring, exit codes,
//! artifact shapes, and agreement with independent metric recomputations.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use temprel::records::{read_jsonl, write_jsonl, CorpusRecord, PredictionRecord};
use temprel::types::VAGUE;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_temprel"));
    // Hermetic runs: the binary reads TEMPREL_* overrides from the
    // environment, so tests start from a clean slate.
    cmd.env_clear();
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Run a subcommand that must succeed and parse its stdout summary.
fn run_ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "`temprel {}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).expect("stdout is UTF-8");
    serde_json::from_str(text.trim()).expect("stdout is one JSON object")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

const SMALL: &str = "n_train = 300\nn_dev = 60\nn_test = 50\nepochs = 3\n";

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn gen_data_writes_three_splits_with_configured_counts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "n_train = 40\nn_dev = 20\nn_test = 30\n");
    let out_s = out.display().to_string();

    let summary = run_ok(&["gen-data", "--out", &out_s, "--config", &cfg, "--seed", "9"]);
    assert_eq!(summary["command"], "gen-data");
    assert_eq!(summary["n_train"], 40);
    assert_eq!(line_count(&out.join("train.jsonl")), 40);
    assert_eq!(line_count(&out.join("dev.jsonl")), 20);
    assert_eq!(line_count(&out.join("test.jsonl")), 30);

    // Same seed, fresh directory: byte-identical corpus files.
    let out2 = dir.path().join("run2");
    let out2_s = out2.display().to_string();
    run_ok(&["gen-data", "--out", &out2_s, "--config", &cfg, "--seed", "9"]);
    for file in ["train.jsonl", "dev.jsonl", "test.jsonl"] {
        assert_eq!(
            fs::read(out.join(file)).unwrap(),
            fs::read(out2.join(file)).unwrap(),
            "{file} differs between identically-seeded runs"
        );
    }
}

#[test]
fn full_stage_sequence_succeeds_on_a_small_corpus() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), SMALL);
    let out_s = out.display().to_string();
    let common = ["--out", out_s.as_str(), "--config", cfg.as_str()];

    let stages: &[&[&str]] = &[
        &["gen-data"],
        &["train"],
        &["search-beta"],
        &["fit-temperature"],
        &["fit-threshold"],
        &["predict", "--split", "test"],
        &["evaluate", "--split", "test"],
        &["timeline", "--split", "test"],
        &["reliability", "--split", "test"],
    ];
    for stage in stages {
        let mut args: Vec<&str> = stage.to_vec();
        args.extend_from_slice(&common);
        run_ok(&args);
    }

    for artifact in [
        "model.json",
        "betas.json",
        "temperature.json",
        "threshold.json",
        "predictions.jsonl",
        "evaluation.json",
        "timelines.jsonl",
        "reliability.csv",
    ] {
        assert!(out.join(artifact).is_file(), "missing artifact {artifact}");
    }

    assert_eq!(line_count(&out.join("predictions.jsonl")), 50);
    // One timeline per document: the synthetic corpus is one pair per doc.
    assert_eq!(line_count(&out.join("timelines.jsonl")), 50);

    let csv = fs::read_to_string(out.join("reliability.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "bin_lo,bin_hi,count,mean_conf,mean_acc");
    assert_eq!(lines.len(), 12, "header + 10 bins + summary");
    assert!(lines[11].starts_with("summary,ece,"));
    assert!(lines[11].contains(",nll,"));
    for row in &lines[1..11] {
        assert_eq!(row.split(',').count(), 5);
    }
}

#[test]
#[allow(clippy::needless_range_loop)] // confusion-matrix walk over both axes
fn evaluate_matches_an_independent_confusion_recount() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), SMALL);
    let out_s = out.display().to_string();
    let common = ["--out", out_s.as_str(), "--config", cfg.as_str()];

    for stage in [["gen-data"], ["train"]] {
        let mut args: Vec<&str> = stage.to_vec();
        args.extend_from_slice(&common);
        run_ok(&args);
    }
    run_ok(&["predict", "--split", "test", common[0], common[1], common[2], common[3]])
        .as_object()
        .unwrap();
    let summary = run_ok(&["evaluate", "--split", "test", common[0], common[1], common[2], common[3]]);

    // Recount from the raw artifacts, over string labels, with no temprel
    // metric code involved.
    let labels = ["Before", "After", "Simultaneous", VAGUE];
    let idx = |l: &str| labels.iter().position(|x| *x == l).unwrap();
    let corpus: Vec<CorpusRecord> = read_jsonl(&out.join("test.jsonl")).unwrap();
    let preds: Vec<PredictionRecord> = read_jsonl(&out.join("predictions.jsonl")).unwrap();
    let decision_of: std::collections::HashMap<&str, &str> = preds
        .iter()
        .map(|p| (p.id.as_str(), p.decision.as_str()))
        .collect();
    let mut counts = [[0u32; 4]; 4];
    for r in &corpus {
        counts[idx(&r.label)][idx(decision_of[r.id.as_str()])] += 1;
    }
    // K-way drops every row touching the abstention class on either axis;
    // (K+1)-way keeps all four classes.
    let f1s = |class_set: std::ops::Range<usize>, keep: &dyn Fn(usize, usize) -> bool| {
        let mut tp_all = 0u32;
        let mut fpfn_all = 0u32;
        let mut per_class = Vec::new();
        for c in class_set.clone() {
            let mut tp = 0u32;
            let mut fp = 0u32;
            let mut fn_ = 0u32;
            for g in 0..4 {
                for p in 0..4 {
                    if !keep(g, p) {
                        continue;
                    }
                    if g == c && p == c {
                        tp += counts[g][p];
                    } else if p == c {
                        fp += counts[g][p];
                    } else if g == c {
                        fn_ += counts[g][p];
                    }
                }
            }
            per_class.push(if 2 * tp + fp + fn_ == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            });
            tp_all += tp;
            fpfn_all += fp + fn_;
        }
        let micro = if 2 * tp_all + fpfn_all == 0 {
            0.0
        } else {
            2.0 * tp_all as f64 / (2 * tp_all + fpfn_all) as f64
        };
        let macro_ = per_class.iter().sum::<f64>() / per_class.len() as f64;
        (micro, macro_)
    };
    let (micro_k, macro_k) = f1s(0..3, &|g, p| g < 3 && p < 3);
    let (micro_k1, macro_k1) = f1s(0..4, &|_, _| true);

    let close = |v: &Value, want: f64| (v.as_f64().unwrap() - want).abs() < 1e-9;
    assert!(close(&summary["k_way"]["micro_f1"], micro_k), "k-way micro");
    assert!(close(&summary["k_way"]["macro_f1"], macro_k), "k-way macro");
    assert!(close(&summary["k_plus_1_way"]["micro_f1"], micro_k1), "k+1 micro");
    assert!(close(&summary["k_plus_1_way"]["macro_f1"], macro_k1), "k+1 macro");

    // The stored artifact carries the same summary.
    let stored: Value =
        serde_json::from_str(&fs::read_to_string(out.join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(stored, summary);
}

#[test]
fn evaluate_is_perfect_on_gold_echo_predictions() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "n_train = 30\nn_dev = 30\nn_test = 40\n");
    let out_s = out.display().to_string();
    run_ok(&["gen-data", "--out", &out_s, "--config", &cfg]);

    // Hand-build predictions that echo gold with full confidence.
    let corpus: Vec<CorpusRecord> = read_jsonl(&out.join("test.jsonl")).unwrap();
    let gold_idx = |l: &str| ["Before", "After", "Simultaneous"].iter().position(|x| *x == l);
    let rows: Vec<PredictionRecord> = corpus
        .iter()
        .map(|r| {
            let (y_hat, entropy, confidence) = match gold_idx(&r.label) {
                Some(g) => {
                    let mut v = vec![0.0; 3];
                    v[g] = 1.0;
                    (v, 0.0, 1.0)
                }
                None => (vec![1.0 / 3.0; 3], (3.0f64).ln(), 1.0 / 3.0),
            };
            PredictionRecord {
                id: r.id.clone(),
                y_full: y_hat.clone(),
                y_trigger: vec![1.0 / 3.0; 3],
                y_empty: vec![1.0 / 3.0; 3],
                y_debiased: y_hat.clone(),
                y_hat,
                entropy,
                decision: r.label.clone(),
                confidence,
            }
        })
        .collect();
    write_jsonl(&out.join("predictions.jsonl"), &rows).unwrap();

    let summary = run_ok(&["evaluate", "--split", "test", "--out", &out_s, "--config", &cfg]);
    assert_eq!(summary["k_way"]["micro_f1"], 1.0);
    assert_eq!(summary["k_way"]["macro_f1"], 1.0);
    assert_eq!(summary["k_plus_1_way"]["micro_f1"], 1.0);
    assert_eq!(summary["k_plus_1_way"]["macro_f1"], 1.0);
    assert_eq!(summary["ece"], 0.0);
    assert_eq!(summary["nll"], 0.0);
}

#[test]
fn missing_prerequisites_exit_3_with_the_stage_name() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("empty");
    fs::create_dir_all(&out).unwrap();
    let out_s = out.display().to_string();

    // (args, stage that should be named)
    let cases: &[(&[&str], &str)] = &[
        (&["train"], "gen-data"),
        (&["search-beta"], "train"),
        (&["fit-temperature"], "train"),
        (&["fit-threshold"], "train"),
        (&["predict"], "train"),
        (&["evaluate"], "gen-data"),
        (&["timeline"], "gen-data"),
        (&["reliability"], "gen-data"),
    ];
    for (args, stage) in cases {
        let mut full: Vec<&str> = args.to_vec();
        full.extend_from_slice(&["--out", &out_s]);
        let result = run(&full);
        assert_eq!(result.status.code(), Some(3), "{args:?} exit code");
        let stderr = String::from_utf8_lossy(&result.stderr);
        assert!(
            stderr.contains(&format!("run the `{stage}` stage first")),
            "{args:?} stderr names the missing stage: {stderr}"
        );
    }

    // With a corpus but no predictions, scoring stages point at `predict`.
    let cfg = write_config(dir.path(), "n_train = 20\nn_dev = 20\nn_test = 20\n");
    run_ok(&["gen-data", "--out", &out_s, "--config", &cfg]);
    for cmd in ["evaluate", "timeline", "reliability"] {
        let result = run(&[cmd, "--out", &out_s, "--config", &cfg]);
        assert_eq!(result.status.code(), Some(3), "{cmd} exit code");
        assert!(String::from_utf8_lossy(&result.stderr).contains("run the `predict` stage first"));
    }
}

#[test]
fn config_and_flag_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let out_s = out.display().to_string();

    // Unknown key.
    let bad_key = write_config(dir.path(), "n_trian = 40\n");
    let result = run(&["gen-data", "--out", &out_s, "--config", &bad_key]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("n_trian"));

    // Out-of-range value.
    let bad_value = write_config(dir.path(), "vague_fraction = 2.0\n");
    let result = run(&["gen-data", "--out", &out_s, "--config", &bad_value]);
    assert_eq!(result.status.code(), Some(2));

    // Type error, via an environment override.
    let result = bin()
        .args(["gen-data", "--out", &out_s])
        .env("TEMPREL_EPOCHS", "three")
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("epochs"));

    // Bad flag values.
    let result = run(&["predict", "--out", &out_s, "--split", "validation"]);
    assert_eq!(result.status.code(), Some(2));
    let result = run(&["search-beta", "--out", &out_s, "--metric", "f2"]);
    assert_eq!(result.status.code(), Some(2));

    // Malformed config line.
    let malformed = write_config(dir.path(), "just some words\n");
    let result = run(&["gen-data", "--out", &out_s, "--config", &malformed]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn environment_variables_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "n_train = 25\nn_dev = 25\nn_test = 30\n");
    let out_s = out.display().to_string();

    let result = bin()
        .args(["gen-data", "--out", &out_s, "--config", &cfg])
        .env("TEMPREL_N_TEST", "12")
        .output()
        .unwrap();
    assert!(result.status.success());
    assert_eq!(line_count(&out.join("train.jsonl")), 25);
    assert_eq!(line_count(&out.join("test.jsonl")), 12);
}

#[test]
fn predictions_for_a_different_split_exit_3() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "n_train = 30\nn_dev = 20\nn_test = 20\nepochs = 1\n");
    let out_s = out.display().to_string();
    for stage in [vec!["gen-data"], vec!["train"], vec!["predict", "--split", "dev"]] {
        let mut args = stage.clone();
        args.extend_from_slice(&["--out", &out_s, "--config", &cfg]);
        run_ok(&args);
    }
    let result = run(&["evaluate", "--split", "test", "--out", &out_s, "--config", &cfg]);
    assert_eq!(result.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("--split test"), "suggests re-running predict: {stderr}");
}
