//! Offline deterministic chat backend.
//!
//! Recognizes the three agent prompt shapes and answers them by rule, so the
//! whole pipeline runs without a network. Responses are a pure function of
//! the prompt; canned responses can be queued for fixture-driven tests.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde_json::{json, Value};

use super::{ChatBackend, GatewayError, GenerationParams, RawCompletion};
use crate::jsonx;

pub struct MockBackend {
    canned: Mutex<VecDeque<String>>,
    calls: AtomicU64,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockBackend {
    pub fn new() -> Self {
        MockBackend {
            canned: Mutex::new(VecDeque::new()),
            calls: AtomicU64::new(0),
        }
    }

    /// Queues responses returned verbatim, in order, before rule-based ones.
    pub fn with_canned(responses: Vec<String>) -> Self {
        MockBackend {
            canned: Mutex::new(responses.into()),
            calls: AtomicU64::new(0),
        }
    }

    pub fn push_canned(&self, response: impl Into<String>) {
        self.canned.lock().unwrap().push_back(response.into());
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for MockBackend {
    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<RawCompletion, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(canned) = self.canned.lock().unwrap().pop_front() {
            return Ok(completion(canned));
        }
        let text = if prompt.contains(crate::dedup::DEDUP_PROMPT_MARKER) {
            mock_dedup(prompt)
        } else if prompt.contains(crate::topics::TOPIC_PROMPT_MARKER) {
            mock_topics(prompt)
        } else if prompt.contains(crate::enrich::ENRICH_PROMPT_MARKER) {
            mock_enrich(prompt)
        } else {
            format!("MOCK: {}", prompt.chars().take(200).collect::<String>())
        };
        Ok(completion(text))
    }
}

fn completion(text: String) -> RawCompletion {
    RawCompletion {
        text,
        input_tokens: None,
        output_tokens: None,
    }
}

fn is_field_key(key: &str) -> bool {
    !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Echoes the free-text response prefixed with the structured context, in the
/// canonical phrasing when the context is job title + years of experience.
fn mock_enrich(prompt: &str) -> String {
    let mut fields: Vec<(String, String)> = Vec::new();
    for line in prompt.lines() {
        if line.trim_start().starts_with("Enriched response:") {
            break;
        }
        if let Some((key, value)) = line.split_once(':') {
            let key = key.trim();
            if is_field_key(key) {
                fields.push((key.to_string(), value.trim().to_string()));
            }
        }
    }
    let Some((_, response)) = fields.pop() else {
        return String::new();
    };
    match fields.as_slice() {
        [(k1, job), (k2, years)] if k1 == "job_title" && k2 == "years_of_experience" => {
            format!("As a {job} with {years} years of experience: {response}")
        }
        [] => response,
        context => {
            let joined: Vec<String> = context.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("[{}] {}", joined.join("; "), response)
        }
    }
}

fn title_case(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Builds a fixed, well-formed topic list from words found in the batched
/// responses: distinct tokens in first-seen order, five per topic, up to four
/// topics.
fn mock_topics(prompt: &str) -> String {
    let mut seen = std::collections::HashSet::new();
    let mut tokens: Vec<String> = Vec::new();
    for line in prompt.lines() {
        let trimmed = line.trim_start();
        let Some(dot) = trimmed.find(". ") else { continue };
        if !trimmed[..dot].chars().all(|c| c.is_ascii_digit()) || dot == 0 {
            continue;
        }
        for raw in trimmed[dot + 2..].split(|c: char| !c.is_alphanumeric()) {
            let token = raw.to_lowercase();
            if token.len() >= 3 && seen.insert(token.clone()) {
                tokens.push(token);
            }
        }
    }
    if tokens.is_empty() {
        tokens.push("feedback".to_string());
    }
    let topics: Vec<Value> = tokens
        .chunks(5)
        .take(4)
        .map(|words| {
            json!({
                "name": format!("{} Theme", title_case(&words[0])),
                "description": format!("Responses centered on {}", words.join(", ")),
                "respondent_profile": "Survey respondents mentioning these terms",
                "representative_words": words,
            })
        })
        .collect();
    serde_json::to_string_pretty(&Value::Array(topics)).unwrap()
}

/// Merges the topic list embedded in the prompt by identical (case-folded)
/// name, reporting each output topic's source names.
fn mock_dedup(prompt: &str) -> String {
    let Some(Value::Array(items)) = jsonx::extract_first_array(prompt) else {
        return "[]".to_string();
    };
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Vec<Value>> = std::collections::HashMap::new();
    for item in items {
        let Some(name) = item.get("name").and_then(Value::as_str) else {
            continue;
        };
        let key = name.to_lowercase();
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(item);
    }
    let merged: Vec<Value> = order
        .iter()
        .map(|key| {
            let members = &groups[key];
            let first = &members[0];
            let mut words: Vec<String> = Vec::new();
            let mut word_seen = std::collections::HashSet::new();
            for member in members {
                if let Some(list) = member.get("representative_words").and_then(Value::as_array) {
                    for w in list.iter().filter_map(Value::as_str) {
                        if word_seen.insert(w.to_lowercase()) {
                            words.push(w.to_string());
                        }
                    }
                }
            }
            let sources: Vec<&str> = members
                .iter()
                .filter_map(|m| m.get("name").and_then(Value::as_str))
                .collect();
            json!({
                "name": first.get("name").cloned().unwrap_or(Value::Null),
                "description": first.get("description").cloned().unwrap_or(Value::String(String::new())),
                "respondent_profile": first.get("respondent_profile").cloned().unwrap_or(Value::String(String::new())),
                "representative_words": words,
                "sources": sources,
            })
        })
        .collect();
    serde_json::to_string_pretty(&Value::Array(merged)).unwrap()
}
