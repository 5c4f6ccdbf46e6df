//! End-to-end pipeline and CLI tests against the offline mock backend.

use std::path::Path;
use std::process::Command;

use maltopic::pipeline::{self, PipelineConfig};
use maltopic::report::render_report;

fn write_survey_csv(path: &Path, rows: usize) {
    let mut body = String::from("job_title,years_of_experience,concerns\n");
    let titles = ["Engineer", "Data Scientist", "Analyst", "Manager"];
    let worries = [
        "automation could replace my role entirely",
        "privacy of the data we feed these systems",
        "the cost of licenses keeps climbing",
        "I do not trust the accuracy of the output",
        "",
    ];
    for i in 0..rows {
        body.push_str(&format!(
            "{},{},{}\n",
            titles[i % titles.len()],
            1 + i % 15,
            worries[i % worries.len()]
        ));
    }
    std::fs::write(path, body).unwrap();
}

fn config_json(cache_dir: &Path) -> serde_json::Value {
    serde_json::json!({
        "schema": [
            {"name": "job_title", "kind": "structured"},
            {"name": "years_of_experience", "kind": "structured"},
            {"name": "concerns", "kind": "free_text"}
        ],
        "enrichment": {
            "target_field": "concerns",
            "context_fields": ["job_title", "years_of_experience"]
        },
        "cache_dir": cache_dir.to_str().unwrap()
    })
}

fn config(cache_dir: &Path) -> PipelineConfig {
    serde_json::from_value(config_json(cache_dir)).unwrap()
}

#[test]
fn full_run_on_202_records() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("survey.csv");
    write_survey_csv(&csv, 202);
    let config = config(&dir.path().join("cache"));
    let gateway = pipeline::build_gateway(&config);
    let embedder = pipeline::build_embedder(&config);
    let out = dir.path().join("run");
    let artifacts = pipeline::run_pipeline(&config, &csv, &out, &gateway, embedder.as_ref()).unwrap();

    assert_eq!(artifacts.enriched.len(), 202);
    // Every fifth response is blank and excluded without an LLM call.
    let excluded = artifacts.enriched.iter().filter(|r| r.excluded).count();
    assert_eq!(excluded, 40);
    assert!(!artifacts.dedup.topics.is_empty());
    let metrics = artifacts.metrics.as_ref().expect("metrics present");
    assert!((0.0..=1.0).contains(&metrics.diversity));
    assert!((0.0..=1.0).contains(&metrics.coverage));
    assert!(artifacts.cost_summary.total_usd > 0.0);
    for file in [
        "enriched.json",
        "topic_batches.json",
        "dedup.json",
        "metrics.json",
        "exchanges.json",
        "manifest.json",
    ] {
        assert!(out.join(file).exists(), "missing {file}");
    }

    // Rendering a loaded run equals rendering the in-memory artifacts.
    let loaded = pipeline::load_artifacts(&out).unwrap();
    assert_eq!(render_report(&loaded), render_report(&artifacts));
}

#[test]
fn empty_dataset_completes_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("survey.csv");
    std::fs::write(&csv, "job_title,years_of_experience,concerns\n").unwrap();
    let config = config(&dir.path().join("cache"));
    let gateway = pipeline::build_gateway(&config);
    let embedder = pipeline::build_embedder(&config);
    let artifacts =
        pipeline::run_pipeline(&config, &csv, &dir.path().join("run"), &gateway, embedder.as_ref())
            .unwrap();
    assert!(artifacts.enriched.is_empty());
    assert!(artifacts.dedup.topics.is_empty());
    assert!(artifacts.metrics.is_none());
    assert!(!artifacts.warnings.is_empty());
    assert_eq!(gateway.live_call_count(), 0);
}

#[test]
fn deleting_metrics_resumes_without_llm_calls() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("survey.csv");
    write_survey_csv(&csv, 30);
    let config = config(&dir.path().join("cache"));
    let out = dir.path().join("run");

    let gateway = pipeline::build_gateway(&config);
    let embedder = pipeline::build_embedder(&config);
    pipeline::run_pipeline(&config, &csv, &out, &gateway, embedder.as_ref()).unwrap();
    let before = std::fs::read(out.join("metrics.json")).unwrap();

    std::fs::remove_file(out.join("metrics.json")).unwrap();
    // Fresh gateway with no cache dir: any completion would be a live call.
    let resume_config = PipelineConfig {
        cache_dir: None,
        ..config.clone()
    };
    let gateway2 = pipeline::build_gateway(&resume_config);
    pipeline::run_pipeline(&resume_config, &csv, &out, &gateway2, embedder.as_ref()).unwrap();
    assert_eq!(gateway2.live_call_count(), 0, "resume must reuse persisted stages");
    assert_eq!(std::fs::read(out.join("metrics.json")).unwrap(), before);
}

#[test]
fn concurrent_run_on_same_directory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("survey.csv");
    write_survey_csv(&csv, 5);
    let config = config(&dir.path().join("cache"));
    let out = dir.path().join("run");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".lock"), b"").unwrap();
    let gateway = pipeline::build_gateway(&config);
    let embedder = pipeline::build_embedder(&config);
    let err = pipeline::run_pipeline(&config, &csv, &out, &gateway, embedder.as_ref()).unwrap_err();
    assert!(err.to_string().contains("lock"), "got: {err}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maltopic"))
}

#[test]
fn cli_run_report_and_prep_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("survey.csv");
    write_survey_csv(&csv, 12);
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_vec_pretty(&config_json(&dir.path().join("cache"))).unwrap(),
    )
    .unwrap();
    let out = dir.path().join("run");

    let status = bin()
        .args(["run", "--input"])
        .arg(&csv)
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("report.md").exists());

    let report = bin().args(["report", "--run"]).arg(&out).output().unwrap();
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("# Topic Modeling Report"));
    assert!(text.contains("## Cost"));

    let baseline_out = dir.path().join("baseline");
    let status = bin()
        .args(["prep-baseline", "--input"])
        .arg(&csv)
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(&baseline_out)
        .status()
        .unwrap();
    assert!(status.success());
    let corpus = std::fs::read_to_string(baseline_out.join("corpus.txt")).unwrap();
    assert_eq!(corpus.lines().count(), 12);
}

#[test]
fn cli_eval_scores_external_topics() {
    let dir = tempfile::tempdir().unwrap();
    let topics_path = dir.path().join("topics.json");
    std::fs::write(
        &topics_path,
        serde_json::to_vec_pretty(&serde_json::json!([
            {
                "name": "Privacy",
                "description": "data privacy concerns",
                "respondent_profile": "all respondents",
                "representative_words": ["privacy", "security"]
            },
            {
                "name": "Cost",
                "description": "cost concerns",
                "respondent_profile": "all respondents",
                "representative_words": ["cost", "budget"]
            }
        ]))
        .unwrap(),
    )
    .unwrap();
    let corpus_path = dir.path().join("corpus.txt");
    std::fs::write(&corpus_path, "privacy and security matter\ncost and budget matter\n").unwrap();
    let out = dir.path().join("eval");

    let status = bin()
        .args(["eval", "--topics"])
        .arg(&topics_path)
        .arg("--corpus")
        .arg(&corpus_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["diversity"], 1.0);
}

#[test]
fn cli_bad_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("survey.csv");
    write_survey_csv(&csv, 2);
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, b"{ not json").unwrap();
    let status = bin()
        .args(["run", "--input"])
        .arg(&csv)
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("run"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn cli_missing_input_exits_with_stage_code() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_vec_pretty(&config_json(&dir.path().join("cache"))).unwrap(),
    )
    .unwrap();
    let status = bin()
        .args(["run", "--input"])
        .arg(dir.path().join("nope.csv"))
        .arg("--config")
        .arg(&config_path)
        .arg("--out")
        .arg(dir.path().join("run"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
