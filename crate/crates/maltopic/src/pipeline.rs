//! End-to-end orchestration: ingest, enrich, batch + extract, dedup,
//! metrics. Every stage persists before the next starts, so a failed or
//! interrupted run resumes from the last completed stage.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::baseline;
use crate::dedup::{self, DedupResult};
use crate::enrich::{self, EnrichOptions, EnrichedResponse, EnrichmentSpec};
use crate::gateway::{
    ChatExchange, CostModel, Gateway, GenerationParams, HttpChatBackend, MockBackend, TokenBudget,
};
use crate::ingest::{self, FieldSchema};
use crate::metrics::{
    self, default_stopwords, CoherenceConfig, CoverageConfig, Embedder, HttpEmbedder,
    MetricsReport, MockEmbedder, TokenizedCorpus,
};
use crate::topics::{self, Topic, TopicBatchResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusChoice {
    /// Score topics against the enriched responses they were derived from.
    #[default]
    Enriched,
    /// Score against the original free-text responses instead.
    Original,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    #[default]
    Mock,
    Http {
        base_url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    #[default]
    Mock,
    Http {
        base_url: String,
        model: String,
        dimension: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub schema: Vec<FieldSchema>,
    pub enrichment: EnrichmentSpec,
    #[serde(default)]
    pub params: GenerationParams,
    #[serde(default)]
    pub budget: TokenBudget,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub coherence: CoherenceConfig,
    #[serde(default)]
    pub coverage: CoverageConfig,
    /// None means the built-in stopword list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<Vec<String>>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub failure_threshold: f64,
    #[serde(default)]
    pub corpus_choice: CorpusChoice,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn stopword_set(&self) -> HashSet<String> {
        match &self.stopwords {
            Some(words) => words.iter().map(|w| w.to_lowercase()).collect(),
            None => default_stopwords(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub exchanges: usize,
    pub total_input_tokens: u64,
    pub total_output_tokens: u64,
    pub total_usd: f64,
}

impl CostSummary {
    fn from_exchanges(exchanges: &[ChatExchange]) -> Self {
        CostSummary {
            exchanges: exchanges.len(),
            total_input_tokens: exchanges.iter().map(|e| e.input_tokens).sum(),
            total_output_tokens: exchanges.iter().map(|e| e.output_tokens).sum(),
            total_usd: exchanges.iter().map(|e| e.cost_usd).sum(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    pub input_path: PathBuf,
    pub started_at: String,
    pub finished_at: String,
    pub cost_summary: CostSummary,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub enriched: Vec<EnrichedResponse>,
    pub batch_results: Vec<TopicBatchResult>,
    pub dedup: DedupResult,
    pub metrics: Option<MetricsReport>,
    pub cost_summary: CostSummary,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("output directory is locked by another run: {0}")]
    Locked(PathBuf),
    #[error("ingest stage failed: {0}")]
    Ingest(#[from] ingest::IngestError),
    #[error("dataset validation failed: {0}")]
    Validation(String),
    #[error("enrichment stage failed: {0}")]
    Enrich(#[from] enrich::EnrichError),
    #[error("topic stage failed: {0}")]
    Topics(#[from] topics::TopicError),
    #[error("dedup stage failed: {0}")]
    Dedup(#[from] dedup::DedupError),
    #[error("metrics stage failed: {0}")]
    Metrics(#[from] metrics::MetricsError),
    #[error("topics file entry {index}: {reason}")]
    TopicsFile { index: usize, reason: String },
    #[error("io failure at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad json in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("baseline stage failed: {0}")]
    Baseline(#[from] baseline::BaselineError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Exclusive ownership of an output directory for the duration of a run.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(out_dir: &Path) -> Result<RunLock, PipelineError> {
        fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        let path = out_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(path))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn build_gateway(config: &PipelineConfig) -> Gateway {
    let backend: Arc<dyn crate::gateway::ChatBackend> = match &config.backend {
        BackendConfig::Mock => Arc::new(MockBackend::new()),
        BackendConfig::Http { base_url, api_key_env } => {
            let mut backend = HttpChatBackend::new(base_url.clone());
            if let Some(env) = api_key_env {
                backend = backend.with_api_key_env(env.clone());
            }
            Arc::new(backend)
        }
    };
    let mut gateway = Gateway::new(backend, config.budget, config.cost);
    if let Some(dir) = &config.cache_dir {
        gateway = gateway.with_cache_dir(dir.clone());
    }
    gateway
}

pub fn build_embedder(config: &PipelineConfig) -> Box<dyn Embedder> {
    match &config.embedder {
        EmbedderConfig::Mock => Box::new(MockEmbedder::default()),
        EmbedderConfig::Http {
            base_url,
            model,
            dimension,
            api_key_env,
        } => {
            let mut embedder = HttpEmbedder::new(base_url.clone(), model.clone(), *dimension);
            if let Some(env) = api_key_env {
                embedder = embedder.with_api_key_env(env.clone());
            }
            Box::new(embedder)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let body = serde_json::to_vec_pretty(value).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, body).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads the persisted stage artifact when present, otherwise computes and
/// persists it.
fn stage<T, F>(path: &Path, compute: F) -> Result<T, PipelineError>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce() -> Result<T, PipelineError>,
{
    if path.exists() {
        return read_json(path);
    }
    let value = compute()?;
    write_json(path, &value)?;
    Ok(value)
}

fn append_exchanges(path: &Path, gateway: &Gateway) -> Result<Vec<ChatExchange>, PipelineError> {
    let mut all: Vec<ChatExchange> = if path.exists() {
        read_json(path)?
    } else {
        Vec::new()
    };
    // Parallel stages log in thread-completion order; sort for stable output.
    let mut drained = gateway.drain_exchanges();
    drained.sort_by(|a, b| {
        (&a.prompt_text, a.cached, &a.response_text).cmp(&(&b.prompt_text, b.cached, &b.response_text))
    });
    all.extend(drained);
    write_json(path, &all)?;
    Ok(all)
}

/// Builds the metric corpus from non-excluded responses.
pub fn corpus_from_responses(
    responses: &[EnrichedResponse],
    choice: CorpusChoice,
    stopwords: &HashSet<String>,
) -> TokenizedCorpus {
    let raw: Vec<(String, String)> = responses
        .iter()
        .filter(|r| !r.excluded)
        .map(|r| {
            let text = match choice {
                CorpusChoice::Enriched => r.enriched_text.clone(),
                CorpusChoice::Original => r.original_text.clone(),
            };
            (r.record_id.clone(), text)
        })
        .collect();
    metrics::normalize_and_tokenize(&raw, stopwords)
}

pub fn run_pipeline(
    config: &PipelineConfig,
    input: &Path,
    out_dir: &Path,
    gateway: &Gateway,
    embedder: &dyn Embedder,
) -> Result<RunArtifacts, PipelineError> {
    let _lock = RunLock::acquire(out_dir)?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let mut warnings: Vec<String> = Vec::new();

    let dataset = ingest::load_dataset(input, &config.schema)?;
    let issues = ingest::validate_dataset(&dataset);
    if !issues.is_empty() {
        return Err(PipelineError::Validation(
            issues
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    config
        .enrichment
        .validate(&dataset)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    if dataset.is_empty() {
        warnings.push("input dataset has no records; all artifacts are empty".to_string());
    }

    let exchanges_path = out_dir.join("exchanges.json");

    let enriched = stage(&out_dir.join("enriched.json"), || {
        let options = EnrichOptions {
            parallelism: config.parallelism,
            failure_threshold: config.failure_threshold,
        };
        Ok(enrich::enrich_dataset(
            &dataset,
            &config.enrichment,
            gateway,
            &config.params,
            options,
        )?)
    })?;
    append_exchanges(&exchanges_path, gateway)?;

    let batch_results = stage(&out_dir.join("topic_batches.json"), || {
        Ok(topics::model_topics(
            &enriched,
            &config.budget,
            gateway,
            &config.params,
        )?)
    })?;
    append_exchanges(&exchanges_path, gateway)?;

    let dedup_result = stage(&out_dir.join("dedup.json"), || {
        Ok(dedup::dedup_llm(&batch_results, gateway, &config.params)?)
    })?;
    append_exchanges(&exchanges_path, gateway)?;

    let stopwords = config.stopword_set();
    let corpus = corpus_from_responses(&enriched, config.corpus_choice, &stopwords);
    let metrics_report = if dedup_result.topics.is_empty() || corpus.is_empty() {
        warnings.push("metrics skipped: no topics or no documents".to_string());
        None
    } else {
        Some(stage(&out_dir.join("metrics.json"), || {
            Ok(metrics::evaluate(
                &dedup_result.topics,
                &corpus,
                embedder,
                &config.coherence,
                &config.coverage,
            )?)
        })?)
    };

    let all_exchanges = append_exchanges(&exchanges_path, gateway)?;
    let cost_summary = CostSummary::from_exchanges(&all_exchanges);

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        input_path: input.to_path_buf(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        cost_summary: cost_summary.clone(),
        warnings: warnings.clone(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    Ok(RunArtifacts {
        enriched,
        batch_results,
        dedup: dedup_result,
        metrics: metrics_report,
        cost_summary,
        warnings,
    })
}

/// Loads persisted artifacts from a completed (or partially completed) run
/// directory without re-executing anything.
pub fn load_artifacts(out_dir: &Path) -> Result<RunArtifacts, PipelineError> {
    let enriched: Vec<EnrichedResponse> = read_json(&out_dir.join("enriched.json"))?;
    let batch_results: Vec<TopicBatchResult> = read_json(&out_dir.join("topic_batches.json"))?;
    let dedup_result: DedupResult = read_json(&out_dir.join("dedup.json"))?;
    let metrics_path = out_dir.join("metrics.json");
    let metrics_report = if metrics_path.exists() {
        Some(read_json(&metrics_path)?)
    } else {
        None
    };
    let exchanges_path = out_dir.join("exchanges.json");
    let exchanges: Vec<ChatExchange> = if exchanges_path.exists() {
        read_json(&exchanges_path)?
    } else {
        Vec::new()
    };
    let manifest_path = out_dir.join("manifest.json");
    let warnings = if manifest_path.exists() {
        read_json::<RunManifest>(&manifest_path)?.warnings
    } else {
        Vec::new()
    };
    Ok(RunArtifacts {
        enriched,
        batch_results,
        dedup: dedup_result,
        metrics: metrics_report,
        cost_summary: CostSummary::from_exchanges(&exchanges),
        warnings,
    })
}

/// Parses a topics JSON file (an array of four-field topic objects) with
/// per-entry diagnostics.
pub fn load_topics_file(path: &Path) -> Result<Vec<Topic>, PipelineError> {
    let value: serde_json::Value = read_json(path)?;
    let items = value.as_array().ok_or_else(|| PipelineError::TopicsFile {
        index: 0,
        reason: "top-level value is not an array".to_string(),
    })?;
    let mut parsed = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let topic: Topic =
            serde_json::from_value(item.clone()).map_err(|e| PipelineError::TopicsFile {
                index,
                reason: e.to_string(),
            })?;
        topic.validate().map_err(|e| PipelineError::TopicsFile {
            index,
            reason: e.to_string(),
        })?;
        parsed.push(topic);
    }
    Ok(parsed)
}

/// Reads an evaluation corpus: a JSON array of strings or `{id, text}`
/// objects, or a plain text file with one document per line.
pub fn load_corpus_file(path: &Path) -> Result<Vec<(String, String)>, PipelineError> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        let value: serde_json::Value = read_json(path)?;
        let items = value.as_array().ok_or_else(|| PipelineError::Config(format!(
            "corpus file {} is not a JSON array",
            path.display()
        )))?;
        let mut docs = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            match item {
                serde_json::Value::String(text) => docs.push((i.to_string(), text.clone())),
                serde_json::Value::Object(map) => {
                    let id = map
                        .get("id")
                        .and_then(serde_json::Value::as_str)
                        .map(str::to_string)
                        .unwrap_or_else(|| i.to_string());
                    let text = map
                        .get("text")
                        .and_then(serde_json::Value::as_str)
                        .ok_or_else(|| PipelineError::Config(format!(
                            "corpus entry {i} has no `text` string"
                        )))?;
                    docs.push((id, text.to_string()));
                }
                _ => {
                    return Err(PipelineError::Config(format!(
                        "corpus entry {i} is neither a string nor an object"
                    )))
                }
            }
        }
        Ok(docs)
    } else {
        let body = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(body
            .lines()
            .enumerate()
            .map(|(i, line)| (i.to_string(), line.to_string()))
            .collect())
    }
}

/// Scores an externally produced topic set against a corpus with the same
/// metric semantics as a full run.
pub fn run_eval_only(
    topics_path: &Path,
    corpus_path: &Path,
    coherence_config: &CoherenceConfig,
    coverage_config: &CoverageConfig,
    stopwords: &HashSet<String>,
    embedder: &dyn Embedder,
) -> Result<MetricsReport, PipelineError> {
    let topic_list = load_topics_file(topics_path)?;
    if topic_list.is_empty() {
        return Err(PipelineError::TopicsFile {
            index: 0,
            reason: "topics file contains no topics".to_string(),
        });
    }
    let raw = load_corpus_file(corpus_path)?;
    let corpus = metrics::normalize_and_tokenize(&raw, stopwords);
    Ok(metrics::evaluate(
        &topic_list,
        &corpus,
        embedder,
        coherence_config,
        coverage_config,
    )?)
}
