//! Agent 1: enrich each free-text response with selected structured fields
//! through a single-shot prompt. Strictly N responses in, N out.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, GenerationParams};
use crate::ingest::{FieldKind, SurveyDataset, SurveyRecord};

pub(crate) const ENRICH_PROMPT_MARKER: &str = "Only respond with the enriched response.";

/// Which free-text field to enrich and which structured fields provide the
/// context, in prompt order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentSpec {
    pub target_field: String,
    pub context_fields: Vec<String>,
}

impl EnrichmentSpec {
    pub fn validate(&self, dataset: &SurveyDataset) -> Result<(), EnrichError> {
        let target = dataset
            .field(&self.target_field)
            .ok_or_else(|| EnrichError::UnknownField(self.target_field.clone()))?;
        if target.kind != FieldKind::FreeText {
            return Err(EnrichError::InvalidSpec(format!(
                "target field `{}` is not free-text",
                self.target_field
            )));
        }
        if self.context_fields.is_empty() {
            return Err(EnrichError::InvalidSpec("context_fields is empty".into()));
        }
        for name in &self.context_fields {
            let field = dataset
                .field(name)
                .ok_or_else(|| EnrichError::UnknownField(name.clone()))?;
            if field.kind != FieldKind::Structured {
                return Err(EnrichError::InvalidSpec(format!(
                    "context field `{name}` is not structured"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichedResponse {
    pub record_id: String,
    pub original_text: String,
    pub enriched_text: String,
    pub context_snapshot: BTreeMap<String, String>,
    pub excluded: bool,
}

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("invalid enrichment spec: {0}")]
    InvalidSpec(String),
    #[error("record `{record_id}`: {source}")]
    Record {
        record_id: String,
        source: GatewayError,
    },
    #[error("{failed} of {total} records failed enrichment (threshold {threshold}): first error: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        threshold: f64,
        first: String,
    },
}

/// Fills the single-shot enrichment template: instruction block, one
/// `name: value` line per context field in spec order, then the target
/// column with the original response verbatim.
pub fn build_enrichment_prompt(record: &SurveyRecord, spec: &EnrichmentSpec) -> Result<String, EnrichError> {
    let target_value = record
        .value(&spec.target_field)
        .ok_or_else(|| EnrichError::UnknownField(spec.target_field.clone()))?;

    let mut context_lines = String::new();
    for name in &spec.context_fields {
        let value = record
            .value(name)
            .ok_or_else(|| EnrichError::UnknownField(name.clone()))?;
        context_lines.push_str(&format!("{name}: {value}\n"));
    }

    let context_names = spec.context_fields.join(" and ");
    Ok(format!(
        "You are an AI language assistant.\n\n\
         Your task: A survey was conducted and given are the responses. \
         Enrich the free text response {target} with the respondent's {context_names}. \
         Add context wherever necessary. \
         Maintain the original sentiment and meaning of the response. \
         Do not introduce any new opinions, assumptions, conclusions or extrapolations \
         which were not present in the original response. \
         Keep the language generic and standardized. \
         {marker}\n\n\
         {context_lines}{target}: {value}\n\n\
         Enriched response:",
        target = spec.target_field,
        context_names = context_names,
        marker = ENRICH_PROMPT_MARKER,
        context_lines = context_lines,
        value = target_value,
    ))
}

/// Enriches one record. Blank free-text responses are flagged excluded and
/// never reach the model.
pub fn enrich_record(
    record: &SurveyRecord,
    spec: &EnrichmentSpec,
    gateway: &Gateway,
    params: &GenerationParams,
) -> Result<EnrichedResponse, EnrichError> {
    let original = record.value(&spec.target_field).unwrap_or("").to_string();
    let mut snapshot = BTreeMap::new();
    for name in &spec.context_fields {
        snapshot.insert(
            name.clone(),
            record.value(name).unwrap_or("").to_string(),
        );
    }
    if original.trim().is_empty() {
        return Ok(EnrichedResponse {
            record_id: record.record_id.clone(),
            original_text: original,
            enriched_text: String::new(),
            context_snapshot: snapshot,
            excluded: true,
        });
    }
    let prompt = build_enrichment_prompt(record, spec)?;
    let exchange = gateway.complete(&prompt, params).map_err(|source| EnrichError::Record {
        record_id: record.record_id.clone(),
        source,
    })?;
    Ok(EnrichedResponse {
        record_id: record.record_id.clone(),
        original_text: original,
        enriched_text: exchange.response_text.trim().to_string(),
        context_snapshot: snapshot,
        excluded: false,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EnrichOptions {
    /// Bounded degree of concurrent enrichment calls.
    pub parallelism: usize,
    /// Fraction of records allowed to fail before the whole run fails.
    pub failure_threshold: f64,
}

impl Default for EnrichOptions {
    fn default() -> Self {
        EnrichOptions {
            parallelism: 4,
            failure_threshold: 0.0,
        }
    }
}

/// Enriches every record independently; output order matches input order
/// regardless of completion order.
pub fn enrich_dataset(
    dataset: &SurveyDataset,
    spec: &EnrichmentSpec,
    gateway: &Gateway,
    params: &GenerationParams,
    options: EnrichOptions,
) -> Result<Vec<EnrichedResponse>, EnrichError> {
    spec.validate(dataset)?;
    let total = dataset.records.len();
    if total == 0 {
        return Ok(Vec::new());
    }

    let slots: Vec<Mutex<Option<Result<EnrichedResponse, EnrichError>>>> =
        (0..total).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = options.parallelism.max(1).min(total);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= total {
                    break;
                }
                let result = enrich_record(&dataset.records[idx], spec, gateway, params);
                *slots[idx].lock().unwrap() = Some(result);
            });
        }
    });

    let mut responses = Vec::with_capacity(total);
    let mut failures: Vec<EnrichError> = Vec::new();
    for (idx, slot) in slots.into_iter().enumerate() {
        match slot.into_inner().unwrap().expect("worker filled every slot") {
            Ok(response) => responses.push(response),
            Err(err) => {
                failures.push(err);
                // Keep the N-in/N-out shape; the failed record is excluded.
                let record = &dataset.records[idx];
                responses.push(EnrichedResponse {
                    record_id: record.record_id.clone(),
                    original_text: record.value(&spec.target_field).unwrap_or("").to_string(),
                    enriched_text: String::new(),
                    context_snapshot: BTreeMap::new(),
                    excluded: true,
                });
            }
        }
    }

    if !failures.is_empty() {
        let fraction = failures.len() as f64 / total as f64;
        if fraction > options.failure_threshold {
            return Err(EnrichError::TooManyFailures {
                failed: failures.len(),
                total,
                threshold: options.failure_threshold,
                first: failures[0].to_string(),
            });
        }
    }
    Ok(responses)
}
