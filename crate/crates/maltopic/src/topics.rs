//! Agent 2: partition enriched responses into token-budgeted batches and
//! extract a structured topic list per batch.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::enrich::EnrichedResponse;
use crate::gateway::{estimate_tokens, Gateway, GatewayError, GenerationParams, TokenBudget};
use crate::jsonx;

pub(crate) const TOPIC_PROMPT_MARKER: &str =
    "Identify unique, non-overlapping and exhaustive topics";

const FORMAT_REMINDER: &str = "\n\nReminder: respond with ONLY a JSON array of objects, \
each with exactly the string keys \"name\", \"description\", \"respondent_profile\" and \
the string-array key \"representative_words\". No other text.";

/// The four-field unit of output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    pub description: String,
    pub respondent_profile: String,
    pub representative_words: Vec<String>,
}

impl Topic {
    /// Checks the per-topic invariants: non-empty name, non-empty trimmed
    /// representative words, unique case-insensitively.
    pub fn validate(&self) -> Result<(), TopicError> {
        if self.name.trim().is_empty() {
            return Err(TopicError::InvalidTopic("empty topic name".into()));
        }
        if self.representative_words.is_empty() {
            return Err(TopicError::InvalidTopic(format!(
                "topic `{}` has no representative words",
                self.name
            )));
        }
        let mut seen = HashSet::new();
        for word in &self.representative_words {
            if word.trim().is_empty() {
                return Err(TopicError::InvalidTopic(format!(
                    "topic `{}` has an empty representative word",
                    self.name
                )));
            }
            if !seen.insert(word.trim().to_lowercase()) {
                return Err(TopicError::InvalidTopic(format!(
                    "topic `{}` repeats representative word `{}`",
                    self.name, word
                )));
            }
        }
        Ok(())
    }
}

/// Topics extracted from one batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicBatchResult {
    pub batch_index: usize,
    pub record_ids: Vec<String>,
    pub topics: Vec<Topic>,
    pub repair_retries: u32,
}

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("response `{record_id}` alone exceeds the input token budget ({tokens} tokens, effective limit {limit})")]
    UnsplittableResponse {
        record_id: String,
        tokens: u64,
        limit: u64,
    },
    #[error("no JSON array found in model output")]
    UnparseableOutput,
    #[error("invalid topic: {0}")]
    InvalidTopic(String),
    #[error("batch {batch_index}: output unparseable after repair retry: {reason}")]
    UnparseableAfterRetry { batch_index: usize, reason: String },
    #[error("batch {batch_index}: {source}")]
    Gateway {
        batch_index: usize,
        source: GatewayError,
    },
}

/// Greedy first-fit packing in input order. Excluded responses are dropped;
/// each batch satisfies `overhead + sum of member text tokens <= effective
/// input budget`.
pub fn partition_into_batches(
    responses: &[EnrichedResponse],
    budget: &TokenBudget,
    prompt_overhead_tokens: u64,
) -> Result<Vec<Vec<EnrichedResponse>>, TopicError> {
    let limit = budget.effective_input_tokens();
    let capacity = limit.saturating_sub(prompt_overhead_tokens);

    let mut batches: Vec<Vec<EnrichedResponse>> = Vec::new();
    let mut current: Vec<EnrichedResponse> = Vec::new();
    let mut current_tokens: u64 = 0;

    for response in responses.iter().filter(|r| !r.excluded) {
        let tokens = estimate_tokens(&response.enriched_text);
        if tokens > capacity {
            return Err(TopicError::UnsplittableResponse {
                record_id: response.record_id.clone(),
                tokens: tokens + prompt_overhead_tokens,
                limit,
            });
        }
        if !current.is_empty() && current_tokens + tokens > capacity {
            batches.push(std::mem::take(&mut current));
            current_tokens = 0;
        }
        current_tokens += tokens;
        current.push(response.clone());
    }
    if !current.is_empty() {
        batches.push(current);
    }
    Ok(batches)
}

/// Prompt scaffold without responses; its token estimate is the overhead fed
/// to the packer.
fn prompt_scaffold() -> String {
    format!(
        "You are an AI language assistant performing topic modeling on survey responses.\n\n\
         Your task: Given the numbered survey responses below, {marker} that capture every \
         theme the respondents raise. For each topic provide:\n\
         - name: a concise and descriptive name for the topic\n\
         - description: a one line summary of what the topic encompasses\n\
         - respondent_profile: which respondent profiles are particularly relevant to this topic\n\
         - representative_words: a list of top words which represent this topic\n\n\
         Respond with ONLY a JSON array of objects with exactly those four keys, where \
         representative_words is an array of strings.\n\nResponses:\n",
        marker = TOPIC_PROMPT_MARKER
    )
}

/// Tokens consumed by the prompt template itself, plus slack for numbering.
pub fn prompt_overhead_tokens() -> u64 {
    estimate_tokens(&prompt_scaffold()) + 16
}

pub fn build_topic_prompt(batch: &[EnrichedResponse]) -> String {
    let mut prompt = prompt_scaffold();
    for (i, response) in batch.iter().enumerate() {
        prompt.push_str(&format!("{}. {}\n", i + 1, response.enriched_text));
    }
    prompt
}

fn topic_from_value(value: &Value) -> Result<Topic, TopicError> {
    let get_str = |key: &str| -> Result<String, TopicError> {
        value
            .get(key)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TopicError::InvalidTopic(format!("missing or non-string field `{key}`")))
    };
    let words = value
        .get("representative_words")
        .and_then(Value::as_array)
        .ok_or_else(|| TopicError::InvalidTopic("missing field `representative_words`".into()))?
        .iter()
        .map(|w| {
            w.as_str()
                .map(str::to_string)
                .ok_or_else(|| TopicError::InvalidTopic("non-string representative word".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let topic = Topic {
        name: get_str("name")?,
        description: get_str("description")?,
        respondent_profile: get_str("respondent_profile")?,
        representative_words: words,
    };
    topic.validate()?;
    Ok(topic)
}

/// Parses a topic list out of raw model output, tolerating surrounding prose.
/// Enforces per-topic invariants and case-insensitive name uniqueness.
pub fn parse_topics(response_text: &str) -> Result<Vec<Topic>, TopicError> {
    let arrays = jsonx::extract_arrays(response_text);
    if arrays.is_empty() {
        return Err(TopicError::UnparseableOutput);
    }
    // Take the first array whose elements are all objects; incidental arrays
    // in prose (citations, word lists) are skipped.
    let mut last_err = TopicError::UnparseableOutput;
    for array in &arrays {
        let items = array.as_array().expect("extract_arrays yields arrays");
        if items.is_empty() || !items.iter().all(Value::is_object) {
            continue;
        }
        let parsed: Result<Vec<Topic>, TopicError> = items.iter().map(topic_from_value).collect();
        match parsed {
            Ok(topics) => {
                let mut seen = HashSet::new();
                for topic in &topics {
                    if !seen.insert(topic.name.trim().to_lowercase()) {
                        return Err(TopicError::InvalidTopic(format!(
                            "duplicate topic name `{}` within one batch",
                            topic.name
                        )));
                    }
                }
                return Ok(topics);
            }
            Err(err) => last_err = err,
        }
    }
    Err(last_err)
}

/// Runs one batch through the model. On unparseable output, retries once with
/// a format reminder appended, then fails.
pub fn extract_topics(
    batch_index: usize,
    batch: &[EnrichedResponse],
    gateway: &Gateway,
    params: &GenerationParams,
) -> Result<TopicBatchResult, TopicError> {
    let prompt = build_topic_prompt(batch);
    let record_ids: Vec<String> = batch.iter().map(|r| r.record_id.clone()).collect();

    let exchange = gateway
        .complete(&prompt, params)
        .map_err(|source| TopicError::Gateway { batch_index, source })?;

    match parse_topics(&exchange.response_text) {
        Ok(topics) => Ok(TopicBatchResult {
            batch_index,
            record_ids,
            topics,
            repair_retries: 0,
        }),
        Err(first_err) => {
            let repair_prompt = format!("{prompt}{FORMAT_REMINDER}");
            let retry = gateway
                .complete(&repair_prompt, params)
                .map_err(|source| TopicError::Gateway { batch_index, source })?;
            match parse_topics(&retry.response_text) {
                Ok(topics) => Ok(TopicBatchResult {
                    batch_index,
                    record_ids,
                    topics,
                    repair_retries: 1,
                }),
                Err(_) => Err(TopicError::UnparseableAfterRetry {
                    batch_index,
                    reason: first_err.to_string(),
                }),
            }
        }
    }
}

/// Agent 2 end to end: batch, then extract per batch with consecutive
/// indices from 0.
pub fn model_topics(
    responses: &[EnrichedResponse],
    budget: &TokenBudget,
    gateway: &Gateway,
    params: &GenerationParams,
) -> Result<Vec<TopicBatchResult>, TopicError> {
    let batches = partition_into_batches(responses, budget, prompt_overhead_tokens())?;
    batches
        .iter()
        .enumerate()
        .map(|(i, batch)| extract_topics(i, batch, gateway, params))
        .collect()
}
