//! Binary-level tests: every subcommand end to end, the exit-code contract
//! (0 success, 1 input error, 2 configuration error), and file formats.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn genkl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genkl"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no exit code")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn jsonl_file(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Four k=4 records: two uniform-ish (flagged NC at the defaults) and two
/// peaked (not flagged). The second peaked record's given label disagrees
/// with its argmax.
const RECORDS: &str = concat!(
    r#"{"id":"amb-1","label":1,"prediction":[0.25,0.25,0.25,0.25]}"#,
    "\n",
    r#"{"id":"amb-2","label":3,"prediction":[0.24,0.27,0.26,0.23]}"#,
    "\n",
    r#"{"id":"ok-1","label":1,"prediction":[0.94,0.02,0.02,0.02]}"#,
    "\n",
    r#"{"id":"ok-2","label":2,"prediction":[0.9,0.04,0.03,0.03]}"#,
    "\n",
);

fn write_records(dir: &Path) -> PathBuf {
    let path = dir.join("records.jsonl");
    fs::write(&path, RECORDS).unwrap();
    path
}

fn out_arg(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// The training-regime parameters; at k = 4 they flag the two uniform-ish
/// records and pass the two peaked ones.
const TRAIN_REGIME: [&str; 8] = [
    "--alpha", "0.3", "--beta", "0.03", "--sigma", "0.02", "--p-count", "20",
];

#[test]
fn identify_partitions_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let input = write_records(dir.path());
    let out = out_arg(dir.path(), "out");
    let mut args = vec![
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(&TRAIN_REGIME);
    let run = genkl(&args);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));

    let summary = json_file(&out.join("summary.json"));
    assert_eq!(summary["nc_count"], 2);
    assert_eq!(summary["non_nc_count"], 2);
    assert_eq!(summary["total"], 4);
    assert_eq!(summary["base"], "2");
    assert_eq!(summary["config"]["method"], "gen_kl");
    assert_eq!(summary["config"]["alpha"], 0.3);
    assert_eq!(summary["config"]["p_count"], 20);
    assert!(
        summary["uniform_like"]["vectors"].as_array().is_some(),
        "the sampled reference set is echoed for reproducibility"
    );

    let nc = jsonl_file(&out.join("nc.jsonl"));
    let non_nc = jsonl_file(&out.join("non_nc.jsonl"));
    assert_eq!(nc.len(), 2);
    assert_eq!(non_nc.len(), 2);
    let ids = |lines: &[Value]| -> Vec<String> {
        lines
            .iter()
            .map(|l| l["id"].as_str().unwrap().to_string())
            .collect()
    };
    assert_eq!(ids(&nc), ["amb-1", "amb-2"]);
    assert_eq!(ids(&non_nc), ["ok-1", "ok-2"]);
    for line in &nc {
        assert_eq!(line["is_nc"], true);
        assert!(line["score"].as_f64().unwrap() >= 0.0);
        assert!(line["witness_index"].is_u64(), "NC lines carry a witness");
    }
    for line in &non_nc {
        assert_eq!(line["is_nc"], false);
        assert!(line["score"].as_f64().unwrap() < 0.0);
        assert!(
            !line.as_object().unwrap().contains_key("witness_index"),
            "non-NC lines have no witness key at all"
        );
    }
    // the input record round-trips bit for bit (labels back to 1-based,
    // shortest-roundtrip probabilities)
    assert_eq!(nc[0]["label"], 1);
    assert_eq!(
        nc[0]["prediction"],
        serde_json::json!([0.25, 0.25, 0.25, 0.25])
    );
    assert_eq!(non_nc[1]["label"], 2);
    assert_eq!(
        non_nc[1]["prediction"],
        serde_json::json!([0.9, 0.04, 0.03, 0.03])
    );
}

#[test]
fn identify_reads_csv() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("records.csv");
    fs::write(
        &input,
        "id,label,p1,p2,p3,p4\n\
         amb-1,1,0.25,0.25,0.25,0.25\n\
         amb-2,3,0.24,0.27,0.26,0.23\n\
         ok-1,1,0.94,0.02,0.02,0.02\n\
         ok-2,2,0.9,0.04,0.03,0.03\n",
    )
    .unwrap();
    let out = out_arg(dir.path(), "out");
    let mut args = vec![
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(&TRAIN_REGIME);
    let run = genkl(&args);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));
    let summary = json_file(&out.join("summary.json"));
    assert_eq!(summary["nc_count"], 2, "CSV input matches the JSONL run");
    assert_eq!(summary["non_nc_count"], 2);
}

#[test]
fn identify_defaults_echo_the_library_constants() {
    let dir = TempDir::new().unwrap();
    let input = write_records(dir.path());
    let out = out_arg(dir.path(), "out");
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));
    let summary = json_file(&out.join("summary.json"));
    let config = &summary["config"];
    assert_eq!(config["alpha"], genkl::DEFAULT_IDENTIFY_ALPHA);
    assert_eq!(config["beta"], genkl::DEFAULT_IDENTIFY_BETA);
    assert_eq!(config["sigma"], genkl::DEFAULT_IDENTIFY_SIGMA);
    assert_eq!(
        config["p_count"],
        genkl::DEFAULT_IDENTIFY_P_COUNT as u64
    );
    assert_eq!(config["p_seed"], 0);
    assert_eq!(config["include_exact_uniform"], true);
    // the defaults target the wide-k real-data regime (alpha above 1):
    // at k = 4 even the exactly uniform prediction stays below the
    // decision boundary
    assert_eq!(summary["nc_count"], 0);
}

#[test]
fn identify_rejects_csv_with_bad_header() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("records.csv");
    fs::write(&input, "id,label,q1,q2\nx,1,0.5,0.5\n").unwrap();
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1);
    assert!(stderr_of(&run).contains("expected \"p1\""));
}

#[test]
fn identify_rejects_out_of_range_label() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("records.jsonl");
    fs::write(
        &input,
        r#"{"id":"x","label":0,"prediction":[0.5,0.25,0.25]}"#,
    )
    .unwrap();
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1);
    let err = stderr_of(&run);
    assert!(
        err.contains("records.jsonl:1") && err.contains("out of range 1..=3"),
        "unexpected stderr: {err}"
    );
}

#[test]
fn identify_rejects_malformed_line_with_its_number() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("records.jsonl");
    fs::write(
        &input,
        concat!(
            r#"{"id":"x","label":1,"prediction":[0.5,0.5]}"#,
            "\nnot json at all\n"
        ),
    )
    .unwrap();
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1);
    assert!(
        stderr_of(&run).contains("records.jsonl:2"),
        "the failing line number is reported: {}",
        stderr_of(&run)
    );
}

#[test]
fn identify_rejects_non_stochastic_vector() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("records.jsonl");
    fs::write(
        &input,
        r#"{"id":"x","label":1,"prediction":[0.9,0.3]}"#,
    )
    .unwrap();
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1);
    assert!(stderr_of(&run).contains("records.jsonl:1"));
}

#[test]
fn identify_rejects_unknown_method_via_usage_error() {
    let dir = TempDir::new().unwrap();
    let input = write_records(dir.path());
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--method",
        "bogus",
    ]);
    assert_eq!(code(&run), 2);
}

#[test]
fn identify_rejects_flags_the_method_ignores() {
    let dir = TempDir::new().unwrap();
    let input = write_records(dir.path());
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--method",
        "kl",
        "--alpha",
        "0.5",
    ]);
    assert_eq!(code(&run), 2);
    assert!(
        stderr_of(&run).contains("--alpha not used by method kl"),
        "unexpected stderr: {}",
        stderr_of(&run)
    );
}

#[test]
fn identify_rejects_parameters_out_of_range() {
    let dir = TempDir::new().unwrap();
    let input = write_records(dir.path());
    // beta may not exceed 1/k = 0.25
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--beta",
        "0.9",
    ]);
    assert_eq!(code(&run), 2);
    assert!(stderr_of(&run).contains("invalid config"));
}

#[test]
fn identify_reports_missing_input_as_input_error() {
    let dir = TempDir::new().unwrap();
    let run = genkl(&[
        "identify",
        "--input",
        dir.path().join("absent.jsonl").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1);
}

#[test]
fn identify_accepts_empty_input() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("records.jsonl");
    fs::write(&input, "").unwrap();
    let out = out_arg(dir.path(), "out");
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));
    assert_eq!(json_file(&out.join("summary.json"))["total"], 0);
    assert!(jsonl_file(&out.join("nc.jsonl")).is_empty());
    assert!(jsonl_file(&out.join("non_nc.jsonl")).is_empty());
}

#[test]
fn identify_josrc_needs_a_second_view() {
    let dir = TempDir::new().unwrap();
    let input = write_records(dir.path());
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--method",
        "jo-src",
    ]);
    assert_eq!(code(&run), 1, "a data deficiency is an input error");
    assert!(stderr_of(&run).contains("second prediction view"));
}

#[test]
fn identify_entropy_baseline_threshold() {
    let dir = TempDir::new().unwrap();
    let input = write_records(dir.path());
    let out = out_arg(dir.path(), "out");
    let run = genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--method",
        "normalized-entropy",
        "--tau",
        "0.9",
    ]);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));
    let summary = json_file(&out.join("summary.json"));
    assert_eq!(summary["config"]["method"], "normalized_entropy");
    assert_eq!(summary["config"]["tau"], 0.9);
    // both uniform-ish records sit above 0.9 normalized entropy
    assert_eq!(summary["nc_count"], 2);
    assert!(
        summary.get("uniform_like").is_none(),
        "no reference set is sampled for threshold rules"
    );
}

#[test]
fn metrics_on_perfect_agreement() {
    let dir = TempDir::new().unwrap();
    let flags = r#"{"id":"a","nc":true}
{"id":"b","nc":false}
{"id":"c","nc":true}
{"id":"d","nc":false}
"#;
    let predicted = dir.path().join("predicted.jsonl");
    let truth = dir.path().join("truth.jsonl");
    fs::write(&predicted, flags).unwrap();
    fs::write(&truth, flags).unwrap();
    let out = out_arg(dir.path(), "out");
    let run = genkl(&[
        "metrics",
        "--predicted",
        predicted.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));
    let report = json_file(&out.join("metrics.json"));
    assert_eq!(report["confusion"], serde_json::json!({"tp": 2, "fp": 0, "tn": 2, "fn": 0}));
    for metric in ["precision", "recall", "specificity", "f1", "kappa"] {
        assert_eq!(report[metric]["value"], 1.0, "{metric}");
        assert_eq!(report[metric]["degenerate"], false, "{metric}");
    }
}

#[test]
fn metrics_flags_degenerate_denominators() {
    let dir = TempDir::new().unwrap();
    let predicted = dir.path().join("predicted.jsonl");
    let truth = dir.path().join("truth.jsonl");
    // nothing is predicted positive and nothing is truly positive:
    // precision, recall, and f1 all have zero denominators
    fs::write(&predicted, "{\"id\":\"a\",\"nc\":false}\n{\"id\":\"b\",\"nc\":false}\n").unwrap();
    fs::write(&truth, "{\"id\":\"a\",\"nc\":false}\n{\"id\":\"b\",\"nc\":false}\n").unwrap();
    let out = out_arg(dir.path(), "out");
    let run = genkl(&[
        "metrics",
        "--predicted",
        predicted.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));
    let report = json_file(&out.join("metrics.json"));
    for metric in ["precision", "recall", "f1", "kappa"] {
        assert_eq!(report[metric]["value"], 0.0, "{metric}");
        assert_eq!(report[metric]["degenerate"], true, "{metric}");
    }
    assert_eq!(report["specificity"]["value"], 1.0);
    assert_eq!(report["specificity"]["degenerate"], false);
}

#[test]
fn metrics_rejects_disjoint_id_sets() {
    let dir = TempDir::new().unwrap();
    let predicted = dir.path().join("predicted.jsonl");
    let truth = dir.path().join("truth.jsonl");
    fs::write(&predicted, "{\"id\":\"a\",\"nc\":true}\n").unwrap();
    fs::write(&truth, "{\"id\":\"z\",\"nc\":true}\n").unwrap();
    let run = genkl(&[
        "metrics",
        "--predicted",
        predicted.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1);
    assert!(stderr_of(&run).contains("missing from the truth file"));
}

/// Runs identify at the defaults and relabels the partition, returning the
/// soft-label lines.
fn identify_then_relabel(dir: &Path, normalize: bool) -> Vec<Value> {
    let input = write_records(dir);
    let ident_out = dir.join("ident");
    let mut ident_args = vec![
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        ident_out.to_str().unwrap(),
    ];
    ident_args.extend_from_slice(&TRAIN_REGIME);
    let run = genkl(&ident_args);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));

    let manifest = dir.join("manifest.json");
    fs::write(
        &manifest,
        r#"{"k": 4, "class_sizes": [25, 25, 25, 25], "role": "main"}"#,
    )
    .unwrap();
    let relabel_out = dir.join("relabel");
    let mut args = vec![
        "relabel".to_string(),
        "--nc".to_string(),
        ident_out.join("nc.jsonl").display().to_string(),
        "--non-nc".to_string(),
        ident_out.join("non_nc.jsonl").display().to_string(),
        "--manifest".to_string(),
        manifest.display().to_string(),
        "--out".to_string(),
        relabel_out.display().to_string(),
    ];
    if normalize {
        args.push("--normalize".to_string());
    }
    let run = genkl(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));
    jsonl_file(&relabel_out.join("soft_labels.jsonl"))
}

#[test]
fn relabel_assigns_uniform_and_double_hot() {
    let dir = TempDir::new().unwrap();
    let labels = identify_then_relabel(dir.path(), false);
    assert_eq!(labels.len(), 4);
    let by_id: std::collections::HashMap<&str, &Value> = labels
        .iter()
        .map(|l| (l["id"].as_str().unwrap(), l))
        .collect();

    // NC records are discarded into the uniform soft label
    for id in ["amb-1", "amb-2"] {
        assert_eq!(by_id[id]["variant"], "uniform");
        assert_eq!(by_id[id]["k"], 4);
        assert!(by_id[id].get("support").is_none());
    }
    // ok-1: given label 1 agrees with the argmax, so the two hot entries
    // collapse; equal class sizes put the prior weight at the class
    // fraction 25/100
    assert_eq!(by_id["ok-1"]["variant"], "double_hot");
    assert_eq!(by_id["ok-1"]["support"], serde_json::json!([1]));
    let mass = by_id["ok-1"]["weights"][0].as_f64().unwrap();
    assert!((mass - 1.19).abs() < 1e-12, "collapsed mass 0.25 + 0.94, got {mass}");
    // ok-2: given label 2 disagrees with argmax 1
    assert_eq!(by_id["ok-2"]["support"], serde_json::json!([2, 1]));
    assert_eq!(by_id["ok-2"]["weights"], serde_json::json!([0.25, 0.9]));
}

#[test]
fn relabel_normalizes_to_unit_mass() {
    let dir = TempDir::new().unwrap();
    let labels = identify_then_relabel(dir.path(), true);
    let by_id: std::collections::HashMap<&str, &Value> = labels
        .iter()
        .map(|l| (l["id"].as_str().unwrap(), l))
        .collect();
    assert_eq!(by_id["ok-1"]["variant"], "normalized_double_hot");
    assert_eq!(by_id["ok-1"]["weights"], serde_json::json!([1.0]));
    // the normalized vector reads back in ascending class order: the argmax
    // class 1 first, then the given class 2
    assert_eq!(by_id["ok-2"]["support"], serde_json::json!([1, 2]));
    let weights: Vec<f64> = by_id["ok-2"]["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w.as_f64().unwrap())
        .collect();
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((weights[0] - 0.9 / 1.15).abs() < 1e-12);
    assert!((weights[1] - 0.25 / 1.15).abs() < 1e-12);
}

#[test]
fn relabel_rejects_a_mixed_partition_file() {
    let dir = TempDir::new().unwrap();
    let nc = dir.path().join("nc.jsonl");
    // the second line claims non-NC inside the NC file
    fs::write(
        &nc,
        concat!(
            r#"{"id":"a","label":1,"prediction":[0.25,0.25,0.25,0.25],"is_nc":true,"score":1.4,"witness_index":0}"#,
            "\n",
            r#"{"id":"b","label":1,"prediction":[0.9,0.05,0.03,0.02],"is_nc":false,"score":-0.5}"#,
            "\n",
        ),
    )
    .unwrap();
    let non_nc = dir.path().join("non_nc.jsonl");
    fs::write(&non_nc, "").unwrap();
    let manifest = dir.path().join("manifest.json");
    fs::write(
        &manifest,
        r#"{"k": 4, "class_sizes": [25, 25, 25, 25], "role": "main"}"#,
    )
    .unwrap();
    let run = genkl(&[
        "relabel",
        "--nc",
        nc.to_str().unwrap(),
        "--non-nc",
        non_nc.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1);
    let err = stderr_of(&run);
    assert!(err.contains("nc.jsonl:2"), "unexpected stderr: {err}");
}

#[test]
fn relabel_rejects_manifest_k_mismatch() {
    let dir = TempDir::new().unwrap();
    let input = write_records(dir.path());
    let ident_out = dir.path().join("ident");
    genkl(&[
        "identify",
        "--input",
        input.to_str().unwrap(),
        "--out",
        ident_out.to_str().unwrap(),
    ]);
    let manifest = dir.path().join("manifest.json");
    fs::write(
        &manifest,
        r#"{"k": 6, "class_sizes": [10, 10, 10, 10, 10, 10], "role": "main"}"#,
    )
    .unwrap();
    let run = genkl(&[
        "relabel",
        "--nc",
        ident_out.join("nc.jsonl").to_str().unwrap(),
        "--non-nc",
        ident_out.join("non_nc.jsonl").to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 1);
    assert!(stderr_of(&run).contains("k"));
}

/// A synthetic run small enough for the test profile.
const TINY_CONFIG: &str = r#"{
  "synthetic": {"k": 3, "d": 3, "n_clean": 30, "n_main": 60, "class_separation": 4.0, "seed": 7},
  "run": {
    "p_count": 5,
    "optimizer": {"pretrain_epochs": 50, "train_epochs": 20, "fine_tune_epochs": 2},
    "num_iters": 1,
    "models_to_average": 2,
    "seed": 7
  }
}"#;

#[test]
fn simulate_writes_the_report_bundle() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("tiny.json");
    fs::write(&config, TINY_CONFIG).unwrap();
    let out = out_arg(dir.path(), "out");
    let run = genkl(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--alpha",
        "0.35",
    ]);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));

    let echoed = json_file(&out.join("config.json"));
    assert_eq!(echoed["run"]["alpha"], 0.35, "the override is echoed");
    assert_eq!(echoed["synthetic"]["k"], 3);
    assert_eq!(echoed["run"]["optimizer"]["pretrain_epochs"], 50);

    let reports = json_file(&out.join("reports.json"));
    assert_eq!(reports.as_array().unwrap().len(), 1);
    let report = &reports[0];
    assert_eq!(report["t"], 1);
    assert!(report["nc_count"].is_u64());
    assert!(report["clean_accuracy"].as_f64().unwrap() > 0.5);

    // model.bin holds k*d weights then k biases, little-endian f64
    let header = json_file(&out.join("model.json"));
    assert_eq!(header["k"], 3);
    assert_eq!(header["d"], 3);
    assert_eq!(header["weights_len"], 9);
    assert_eq!(header["bias_len"], 3);
    let bin = fs::read(out.join("model.bin")).unwrap();
    assert_eq!(bin.len(), (9 + 3) * 8);

    let loss = fs::read_to_string(out.join("loss.csv")).unwrap();
    let mut lines = loss.lines();
    assert_eq!(lines.next(), Some("iteration,phase,epoch,loss"));
    // 20 train + 2 fine-tune epochs in one iteration
    assert_eq!(lines.clone().filter(|l| l.contains(",train,")).count(), 20);
    assert_eq!(lines.filter(|l| l.contains(",fine_tune,")).count(), 2);

    let nc_counts = fs::read_to_string(out.join("nc_counts.csv")).unwrap();
    assert_eq!(nc_counts.lines().next(), Some("iteration,nc_count"));
    assert_eq!(nc_counts.lines().count(), 2);
}

#[test]
fn simulate_num_iters_zero_is_pretrain_only() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("tiny.json");
    fs::write(
        &config,
        TINY_CONFIG.replace("\"num_iters\": 1", "\"num_iters\": 0"),
    )
    .unwrap();
    let out = out_arg(dir.path(), "out");
    let run = genkl(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));
    assert_eq!(json_file(&out.join("reports.json")), serde_json::json!([]));
    assert_eq!(
        fs::read_to_string(out.join("loss.csv")).unwrap(),
        "iteration,phase,epoch,loss\n"
    );
    assert!(out.join("model.bin").exists(), "the pretrained model is still written");
}

#[test]
fn simulate_rejects_invalid_override() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("tiny.json");
    fs::write(&config, TINY_CONFIG).unwrap();
    let run = genkl(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--omega2=-3",
    ]);
    assert_eq!(code(&run), 2);
    assert!(stderr_of(&run).contains("invalid config"));
}

#[test]
fn simulate_rejects_malformed_config_as_config_error() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("tiny.json");
    fs::write(&config, "{\"synthetic\": {\"k\": , }}").unwrap();
    let run = genkl(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
}

#[test]
fn sweep_writes_one_row_per_grid_point() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("sweep.json");
    fs::write(
        &config,
        r#"{
  "synthetic": {"k": 3, "d": 3, "n_clean": 30, "n_main": 60, "class_separation": 4.0, "seed": 7},
  "run": {
    "p_count": 5,
    "optimizer": {"pretrain_epochs": 50, "train_epochs": 20, "fine_tune_epochs": 2},
    "num_iters": 1,
    "models_to_average": 2,
    "seed": 7
  },
  "grid": {"alpha": [0.2, 0.4]}
}"#,
    )
    .unwrap();
    let out = out_arg(dir.path(), "out");
    let run = genkl(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "stderr: {}", stderr_of(&run));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "axis,value,config_hash,nc_count,tp,fp,tn,fn,f1,kappa,final_clean_accuracy"
    );
    assert_eq!(lines.len(), 3, "header plus one row per grid point");
    let hashes: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    for (line, hash) in lines[1..].iter().zip(&hashes) {
        assert!(line.starts_with("alpha,"), "row: {line}");
        assert_eq!(hash.len(), 64, "full sha-256 hex");
        assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    }
    assert_ne!(hashes[0], hashes[1], "each grid point hashes differently");
    assert!(out.join("config.json").exists());
}

#[test]
fn table1_check_reports_the_anchor_rows() {
    let run = genkl(&["table1-check"]);
    assert_eq!(code(&run), 0);
    let stdout = String::from_utf8_lossy(&run.stdout).into_owned();
    for id in ["OOD-1", "AID-1", "C-1", "C-2"] {
        assert!(stdout.contains(id), "missing row {id} in: {stdout}");
    }
    // the pinned NC set at (0.7, 0.03): exactly these four rows
    for id in ["OOD-2", "AID-3", "OOD-4", "AID-4"] {
        assert!(stdout.contains(&format!("{id} ")) || stdout.contains(id));
    }
}

#[test]
fn help_lists_all_subcommands() {
    let run = genkl(&["--help"]);
    assert_eq!(code(&run), 0);
    let stdout = String::from_utf8_lossy(&run.stdout).into_owned();
    for sub in ["identify", "relabel", "metrics", "simulate", "sweep", "table1-check"] {
        assert!(stdout.contains(sub), "missing subcommand {sub}");
    }
}
