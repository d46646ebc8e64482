use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use genderprobe_core::lexicon::Lexicon;

fn genderprobe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genderprobe"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) {
    fs::write(dir.join("audit.toml"), body).unwrap();
}

const TWO_MOCKS: &str = r#"
[[models]]
id = "m-a"
backend = "mock"
seed = 7
parameter_count = 1000

[[models]]
id = "m-b"
backend = "mock"
seed = 8
parameter_count = 2000
"#;

#[test]
fn validate_default_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = genderprobe(tmp.path(), &["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["ok"], true);
    assert_eq!(report["suite_sizes"]["sex_gender"], 70);
    assert_eq!(report["suite_sizes"]["sex_baseline"], 470);
    assert_eq!(report["suite_sizes"]["gender_illness"], 770);
    assert_eq!(report["models"].as_array().unwrap().len(), 3);
}

#[test]
fn missing_lexicon_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), &format!("lexicon = \"nowhere.json\"\n{TWO_MOCKS}"));
    let o = genderprobe(tmp.path(), &["--config", "audit.toml", "validate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("lexicon: not found"), "{}", stdout(&o));
}

#[test]
fn lexicon_with_six_identifiers_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(Lexicon::shipped_source()).unwrap();
    doc["gender_identifiers"].as_array_mut().unwrap().pop();
    fs::write(tmp.path().join("lex.json"), serde_json::to_string(&doc).unwrap()).unwrap();
    write_config(tmp.path(), &format!("lexicon = \"lex.json\"\n{TWO_MOCKS}"));
    let o = genderprobe(tmp.path(), &["--config", "audit.toml", "validate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("gender_identifiers"), "{}", stdout(&o));

    let o = genderprobe(tmp.path(), &["--config", "audit.toml", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gender_identifiers"));
}

#[test]
fn unknown_model_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = genderprobe(tmp.path(), &["--model", "nope", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown model `nope`"));
}

#[test]
fn bad_flag_exits_with_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = genderprobe(tmp.path(), &["run", "--suite", "not_a_suite"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_is_cached_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), TWO_MOCKS);
    let args = ["--config", "audit.toml", "--model", "m-a", "--suite", "sex_gender", "run"];
    let first = genderprobe(tmp.path(), &args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert!(stderr(&first).contains("70 records (70 newly scored, 0 cached)"), "{}", stderr(&first));
    let run_id = stdout(&first).trim().to_string();
    assert_eq!(run_id.len(), 24);

    let second = genderprobe(tmp.path(), &args);
    assert_eq!(second.status.code(), Some(0));
    assert!(stderr(&second).contains("70 records (0 newly scored, 70 cached)"));
    assert_eq!(stdout(&second).trim(), run_id);

    let e1 = genderprobe(tmp.path(), &["--config", "audit.toml", "export", &run_id]);
    assert_eq!(e1.status.code(), Some(0), "{}", stderr(&e1));
    let csv_path = tmp.path().join("genderprobe-out/exports").join(format!("{run_id}.csv"));
    let csv1 = fs::read(&csv_path).unwrap();
    let jsonl1 = fs::read(csv_path.with_extension("jsonl")).unwrap();
    assert_eq!(String::from_utf8_lossy(&csv1).lines().count(), 71);
    assert_eq!(String::from_utf8_lossy(&jsonl1).lines().count(), 70);

    genderprobe(tmp.path(), &["--config", "audit.toml", "export", &run_id]);
    assert_eq!(fs::read(&csv_path).unwrap(), csv1);
    assert_eq!(fs::read(csv_path.with_extension("jsonl")).unwrap(), jsonl1);
}

#[test]
fn analyze_skips_views_without_data() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), TWO_MOCKS);
    let run = genderprobe(tmp.path(), &["--config", "audit.toml", "--suite", "sex_gender", "run"]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let o = genderprobe(tmp.path(), &["--config", "audit.toml", "analyze"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["models"].as_array().unwrap().len(), 2);
    assert_eq!(summary["views"]["folk_subversive"], "emitted");
    assert_eq!(summary["views"]["matched_pairs"], "emitted");
    assert_ne!(summary["views"]["illness_density"], "emitted");
    assert_eq!(summary["views"]["context_probabilities"], "emitted");
    assert!(stderr(&o).contains("no gender_illness scores"));
    let tables: Vec<&str> = summary["tables"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    assert!(tables.contains(&"tables/folk_subversive.csv"));
    assert!(!tables.contains(&"tables/size_trend.csv"), "size trend needs three models");
    assert!(!tables.contains(&"tables/gender_illness.csv"));
    assert!(!tables.contains(&"tables/baseline_median.csv"));
    let out = tmp.path().join("genderprobe-out");
    assert!(out.join("summary.json").is_file());
    for f in summary["figures"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).is_file());
    }
}

#[test]
fn analyze_three_models_has_size_trend() {
    let tmp = tempfile::tempdir().unwrap();
    let run = genderprobe(tmp.path(), &["--suite", "sex_gender", "run"]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let o = genderprobe(tmp.path(), &["analyze"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(summary["tables"].as_array().unwrap().iter().any(|t| t == "tables/size_trend.csv"));

    let scoped = genderprobe(tmp.path(), &["--model", "mock-small", "analyze"]);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&scoped)).unwrap();
    assert_eq!(summary["models"].as_array().unwrap().len(), 1);
}

#[test]
fn missing_runs_exit_four() {
    let tmp = tempfile::tempdir().unwrap();
    let o = genderprobe(tmp.path(), &["export", "000000000000000000000000"]);
    assert_eq!(o.status.code(), Some(4));
    let o = genderprobe(tmp.path(), &["analyze"]);
    assert_eq!(o.status.code(), Some(4));
    let o = genderprobe(tmp.path(), &["analyze", "ffffffffffffffffffffffff"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unreachable_backend_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(
        tmp.path(),
        r#"
[remote]
max_retries = 0
timeout_s = 2

[[models]]
id = "far"
backend = "remote"
endpoint = "http://127.0.0.1:1"
parameter_count = 5
"#,
    );
    let o = genderprobe(tmp.path(), &["--config", "audit.toml", "validate"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    let o = genderprobe(tmp.path(), &["--config", "audit.toml", "run"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn remote_without_parameter_count_is_invalid() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(
        tmp.path(),
        "[[models]]\nid = \"far\"\nbackend = \"remote\"\nendpoint = \"http://127.0.0.1:1\"\n",
    );
    let o = genderprobe(tmp.path(), &["--config", "audit.toml", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("remote models need parameter_count"));
}
