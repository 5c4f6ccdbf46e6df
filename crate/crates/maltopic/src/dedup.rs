//! Agent 3: consolidate topic lists from multiple batches into one
//! deduplicated list. LLM-first with a deterministic name-grouping fallback.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{estimate_tokens, Gateway, GatewayError, GenerationParams};
use crate::jsonx;
use crate::topics::{Topic, TopicBatchResult};

pub(crate) const DEDUP_PROMPT_MARKER: &str = "merged, deduplicated list of topics";

const FORMAT_REMINDER: &str = "\n\nReminder: respond with ONLY a JSON array of objects, each \
with the string keys \"name\", \"description\", \"respondent_profile\", the string-array key \
\"representative_words\", and the string-array key \"sources\" listing the exact names of the \
input topics merged into it. No other text.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupMethod {
    Llm,
    Deterministic,
    Skipped,
}

/// Consolidated topic list with, per surviving topic, the
/// (batch_index, source-topic-name) pairs it absorbed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupResult {
    pub topics: Vec<Topic>,
    pub provenance: BTreeMap<String, Vec<(usize, String)>>,
    pub method: DedupMethod,
}

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("gateway failure during dedup: {0}")]
    Gateway(#[from] GatewayError),
}

fn normalize_name(name: &str) -> String {
    name.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn passthrough(batch_results: &[TopicBatchResult], method: DedupMethod) -> DedupResult {
    let mut topics = Vec::new();
    let mut provenance = BTreeMap::new();
    for result in batch_results {
        for topic in &result.topics {
            provenance
                .entry(topic.name.clone())
                .or_insert_with(Vec::new)
                .push((result.batch_index, topic.name.clone()));
            topics.push(topic.clone());
        }
    }
    DedupResult {
        topics,
        provenance,
        method,
    }
}

/// Groups topics by normalized name. The first occurrence (lowest batch
/// index, then list order) keeps its text fields; representative words become
/// the union in first-seen order.
pub fn dedup_deterministic(batch_results: &[TopicBatchResult]) -> DedupResult {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<(usize, &Topic)>> = BTreeMap::new();
    for result in batch_results {
        for topic in &result.topics {
            let key = normalize_name(&topic.name);
            let entry = groups.entry(key.clone()).or_default();
            if entry.is_empty() {
                order.push(key);
            }
            entry.push((result.batch_index, topic));
        }
    }

    let mut topics = Vec::new();
    let mut provenance = BTreeMap::new();
    for key in &order {
        let members = &groups[key];
        let (_, first) = members[0];
        let mut words: Vec<String> = Vec::new();
        let mut seen = HashSet::new();
        for (_, topic) in members {
            for word in &topic.representative_words {
                if seen.insert(word.trim().to_lowercase()) {
                    words.push(word.clone());
                }
            }
        }
        provenance.insert(
            first.name.clone(),
            members
                .iter()
                .map(|(batch, topic)| (*batch, topic.name.clone()))
                .collect(),
        );
        topics.push(Topic {
            name: first.name.clone(),
            description: first.description.clone(),
            respondent_profile: first.respondent_profile.clone(),
            representative_words: words,
        });
    }
    DedupResult {
        topics,
        provenance,
        method: DedupMethod::Deterministic,
    }
}

fn build_dedup_prompt(topics: &[(usize, &Topic)]) -> String {
    let listing: Vec<Value> = topics
        .iter()
        .map(|(batch, t)| {
            serde_json::json!({
                "batch": batch,
                "name": t.name,
                "description": t.description,
                "respondent_profile": t.respondent_profile,
                "representative_words": t.representative_words,
            })
        })
        .collect();
    format!(
        "You are an AI language assistant consolidating topic lists produced from separate \
         batches of survey responses.\n\n\
         Your task: Produce a {marker}. Merge topics that describe the same theme, keeping \
         each distinct theme exactly once. For each output topic synthesize the description \
         and respondent_profile from its sources and combine their representative words. \
         Every output topic must list the exact names of the input topics it merges in a \
         \"sources\" array.\n\n\
         Respond with ONLY a JSON array of objects with the keys name, description, \
         respondent_profile, representative_words, sources.\n\n\
         Input topics:\n{topics}",
        marker = DEDUP_PROMPT_MARKER,
        topics = serde_json::to_string_pretty(&Value::Array(listing)).unwrap(),
    )
}

struct ParsedMerge {
    topics: Vec<Topic>,
    sources: Vec<Vec<String>>,
}

fn parse_merge_output(text: &str) -> Option<ParsedMerge> {
    for array in jsonx::extract_arrays(text) {
        let items = array.as_array().expect("arrays only");
        if items.is_empty() || !items.iter().all(Value::is_object) {
            continue;
        }
        let mut topics = Vec::new();
        let mut sources = Vec::new();
        let mut ok = true;
        for item in items {
            let name = item.get("name").and_then(Value::as_str).unwrap_or("");
            let words: Vec<String> = item
                .get("representative_words")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default();
            let topic_sources: Vec<String> = item
                .get("sources")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default();
            let topic = Topic {
                name: name.to_string(),
                description: item
                    .get("description")
                    .and_then(Value::as_str)
                    .unwrap_or("")
                    .to_string(),
                respondent_profile: item
                    .get("respondent_profile")
                    .and_then(Value::as_str)
                    .unwrap_or("")
                    .to_string(),
                representative_words: words,
            };
            if topic.validate().is_err() || topic_sources.is_empty() {
                ok = false;
                break;
            }
            topics.push(topic);
            sources.push(topic_sources);
        }
        if ok {
            return Some(ParsedMerge { topics, sources });
        }
    }
    None
}

/// Merges via the model; any unparseable or unmatchable output falls back to
/// [`dedup_deterministic`] for the whole pass. A single batch is passed
/// through unchanged with method `skipped`.
pub fn dedup_llm(
    batch_results: &[TopicBatchResult],
    gateway: &Gateway,
    params: &GenerationParams,
) -> Result<DedupResult, DedupError> {
    if batch_results.len() <= 1 {
        return Ok(passthrough(batch_results, DedupMethod::Skipped));
    }

    // Hierarchical pairwise merging when the combined listing blows the
    // input budget.
    let all: Vec<(usize, &Topic)> = batch_results
        .iter()
        .flat_map(|r| r.topics.iter().map(move |t| (r.batch_index, t)))
        .collect();
    let prompt = build_dedup_prompt(&all);
    if estimate_tokens(&prompt) > gateway.budget().effective_input_tokens() && batch_results.len() >= 2 {
        let mid = batch_results.len() / 2;
        let left = dedup_llm(&batch_results[..mid], gateway, params)?;
        let right = dedup_llm(&batch_results[mid..], gateway, params)?;
        return merge_pair(left, right, batch_results, gateway, params);
    }

    run_merge(&all, batch_results, DedupMethod::Llm, gateway, params)
}

// Re-wraps two partial dedup results as synthetic inputs and merges them,
// composing provenance back to the original (batch_index, name) pairs.
fn merge_pair(
    left: DedupResult,
    right: DedupResult,
    originals: &[TopicBatchResult],
    gateway: &Gateway,
    params: &GenerationParams,
) -> Result<DedupResult, DedupError> {
    let mut child_provenance: HashMap<String, Vec<(usize, String)>> = HashMap::new();
    for child in [&left, &right] {
        for (name, entries) in &child.provenance {
            child_provenance
                .entry(normalize_name(name))
                .or_default()
                .extend(entries.iter().cloned());
        }
    }

    let combined: Vec<(usize, &Topic)> = left
        .topics
        .iter()
        .map(|t| (0usize, t))
        .chain(right.topics.iter().map(|t| (1usize, t)))
        .collect();
    let merged = run_merge_raw(&combined, gateway, params)?;

    match merged {
        Some(parsed) => {
            let mut provenance = BTreeMap::new();
            let mut ok = true;
            'outer: for (topic, sources) in parsed.topics.iter().zip(&parsed.sources) {
                let mut expanded = Vec::new();
                for source in sources {
                    match child_provenance.get(&normalize_name(source)) {
                        Some(entries) => expanded.extend(entries.iter().cloned()),
                        None => {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
                provenance.insert(topic.name.clone(), dedupe_entries(expanded));
            }
            if ok && unique_names(&parsed.topics) {
                return Ok(DedupResult {
                    topics: parsed.topics,
                    provenance,
                    method: DedupMethod::Llm,
                });
            }
            Ok(dedup_deterministic(originals))
        }
        None => Ok(dedup_deterministic(originals)),
    }
}

fn unique_names(topics: &[Topic]) -> bool {
    let mut seen = HashSet::new();
    topics.iter().all(|t| seen.insert(normalize_name(&t.name)))
}

// Models may repeat a source name; collapse repeats so each original topic
// appears once per surviving topic.
fn dedupe_entries(entries: Vec<(usize, String)>) -> Vec<(usize, String)> {
    let mut seen = HashSet::new();
    entries
        .into_iter()
        .filter(|e| seen.insert((e.0, normalize_name(&e.1))))
        .collect()
}

fn run_merge(
    all: &[(usize, &Topic)],
    originals: &[TopicBatchResult],
    method: DedupMethod,
    gateway: &Gateway,
    params: &GenerationParams,
) -> Result<DedupResult, DedupError> {
    let Some(parsed) = run_merge_raw(all, gateway, params)? else {
        return Ok(dedup_deterministic(originals));
    };

    // Reconstruct provenance by case-insensitive source-name matching; one
    // unmatched source rejects the whole pass.
    let mut by_name: HashMap<String, Vec<(usize, String)>> = HashMap::new();
    for (batch, topic) in all {
        by_name
            .entry(normalize_name(&topic.name))
            .or_default()
            .push((*batch, topic.name.clone()));
    }
    let mut provenance = BTreeMap::new();
    for (topic, sources) in parsed.topics.iter().zip(&parsed.sources) {
        let mut entries = Vec::new();
        for source in sources {
            match by_name.get(&normalize_name(source)) {
                Some(matched) => entries.extend(matched.iter().cloned()),
                None => return Ok(dedup_deterministic(originals)),
            }
        }
        provenance.insert(topic.name.clone(), dedupe_entries(entries));
    }
    if !unique_names(&parsed.topics) || parsed.topics.len() > all.len() {
        return Ok(dedup_deterministic(originals));
    }
    Ok(DedupResult {
        topics: parsed.topics,
        provenance,
        method,
    })
}

// One model call plus one repair retry; None means fall back.
fn run_merge_raw(
    topics: &[(usize, &Topic)],
    gateway: &Gateway,
    params: &GenerationParams,
) -> Result<Option<ParsedMerge>, DedupError> {
    let prompt = build_dedup_prompt(topics);
    // A pair merge that still cannot fit has nowhere left to split.
    if estimate_tokens(&prompt) > gateway.budget().max_input_tokens {
        return Ok(None);
    }
    let exchange = gateway.complete(&prompt, params)?;
    if let Some(parsed) = parse_merge_output(&exchange.response_text) {
        return Ok(Some(parsed));
    }
    let retry = gateway.complete(&format!("{prompt}{FORMAT_REMINDER}"), params)?;
    Ok(parse_merge_output(&retry.response_text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{CostModel, MockBackend, TokenBudget};
    use std::sync::Arc;

    fn topic(name: &str, words: &[&str]) -> Topic {
        Topic {
            name: name.to_string(),
            description: format!("{name} description"),
            respondent_profile: "everyone".to_string(),
            representative_words: words.iter().map(|w| w.to_string()).collect(),
        }
    }

    fn batch(index: usize, topics: Vec<Topic>) -> TopicBatchResult {
        TopicBatchResult {
            batch_index: index,
            record_ids: vec![format!("r{index}")],
            topics,
            repair_retries: 0,
        }
    }

    fn mock_gateway() -> Gateway {
        Gateway::new(
            Arc::new(MockBackend::new()),
            TokenBudget::default(),
            CostModel::default(),
        )
    }

    #[test]
    fn word_union_keeps_first_seen_order() {
        let results = vec![
            batch(0, vec![topic("Privacy", &["a", "b", "c"])]),
            batch(1, vec![topic("privacy", &["b", "c", "d"])]),
        ];
        let out = dedup_deterministic(&results);
        assert_eq!(out.topics.len(), 1);
        assert_eq!(out.topics[0].representative_words, ["a", "b", "c", "d"]);
        assert_eq!(out.topics[0].name, "Privacy");
        assert_eq!(out.provenance["Privacy"].len(), 2);
    }

    #[test]
    fn distinct_names_concatenate() {
        let results = vec![
            batch(0, vec![topic("A", &["x"]), topic("B", &["y"])]),
            batch(1, vec![topic("C", &["z"])]),
        ];
        let out = dedup_deterministic(&results);
        assert_eq!(out.topics.len(), 3);
        let names: Vec<&str> = out.topics.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["A", "B", "C"]);
    }

    #[test]
    fn empty_input_gives_empty_result() {
        let out = dedup_deterministic(&[]);
        assert!(out.topics.is_empty());
        assert!(out.provenance.is_empty());
    }

    #[test]
    fn deterministic_dedup_is_idempotent() {
        let results = vec![
            batch(0, vec![topic("A", &["x", "y"]), topic("B", &["z"])]),
            batch(1, vec![topic("a", &["y", "w"])]),
        ];
        let once = dedup_deterministic(&results);
        let again = dedup_deterministic(&[batch(0, once.topics.clone())]);
        assert_eq!(once.topics, again.topics);
    }

    #[test]
    fn single_batch_is_skipped() {
        let results = vec![batch(0, vec![topic("Only", &["w"])])];
        let gw = mock_gateway();
        let out = dedup_llm(&results, &gw, &GenerationParams::default()).unwrap();
        assert_eq!(out.method, DedupMethod::Skipped);
        assert_eq!(out.topics, results[0].topics);
        assert_eq!(gw.live_call_count(), 0);
    }

    #[test]
    fn llm_merge_by_identical_name_tracks_provenance() {
        let results = vec![
            batch(0, vec![
                topic("Data Privacy and Security Issues", &["privacy", "security"]),
                topic("Cost Concerns", &["cost"]),
            ]),
            batch(1, vec![
                topic("Data Privacy and Security Issues", &["data", "protection"]),
            ]),
        ];
        let gw = mock_gateway();
        let out = dedup_llm(&results, &gw, &GenerationParams::default()).unwrap();
        assert_eq!(out.method, DedupMethod::Llm);
        assert_eq!(out.topics.len(), 2);
        let merged = out
            .topics
            .iter()
            .find(|t| t.name == "Data Privacy and Security Issues")
            .unwrap();
        assert_eq!(merged.representative_words, ["privacy", "security", "data", "protection"]);
        assert_eq!(out.provenance["Data Privacy and Security Issues"].len(), 2);
    }

    #[test]
    fn unmatchable_source_falls_back_to_deterministic() {
        let canned = r#"[{"name": "Merged", "description": "d", "respondent_profile": "p",
            "representative_words": ["w"], "sources": ["No Such Topic"]}]"#;
        let backend = Arc::new(MockBackend::with_canned(vec![canned.to_string()]));
        let gw = Gateway::new(backend, TokenBudget::default(), CostModel::default());
        let results = vec![
            batch(0, vec![topic("A", &["x"])]),
            batch(1, vec![topic("B", &["y"])]),
        ];
        let out = dedup_llm(&results, &gw, &GenerationParams::default()).unwrap();
        assert_eq!(out.method, DedupMethod::Deterministic);
        assert_eq!(out.topics.len(), 2);
    }

    #[test]
    fn unparseable_after_retry_falls_back_to_deterministic() {
        let backend = Arc::new(MockBackend::with_canned(vec![
            "junk".to_string(),
            "more junk".to_string(),
        ]));
        let gw = Gateway::new(backend.clone(), TokenBudget::default(), CostModel::default());
        let results = vec![
            batch(0, vec![topic("A", &["x"])]),
            batch(1, vec![topic("B", &["y"])]),
        ];
        let out = dedup_llm(&results, &gw, &GenerationParams::default()).unwrap();
        assert_eq!(out.method, DedupMethod::Deterministic);
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn non_expansion_holds_for_both_methods() {
        let results = vec![
            batch(0, vec![topic("A", &["x"]), topic("B", &["y"])]),
            batch(1, vec![topic("a", &["z"]), topic("C", &["w"])]),
        ];
        let total: usize = results.iter().map(|r| r.topics.len()).sum();
        let det = dedup_deterministic(&results);
        assert!(det.topics.len() <= total);
        let gw = mock_gateway();
        let llm = dedup_llm(&results, &gw, &GenerationParams::default()).unwrap();
        assert!(llm.topics.len() <= total);
    }

    #[test]
    fn oversized_listing_merges_hierarchically() {
        let long_topic = |name: &str, word: &str| Topic {
            name: name.to_string(),
            description: "filler ".repeat(90),
            respondent_profile: "everyone".to_string(),
            representative_words: vec![word.to_string()],
        };
        let results = vec![
            batch(0, vec![long_topic("Alpha", "a0")]),
            batch(1, vec![long_topic("Alpha", "a1")]),
            batch(2, vec![long_topic("Beta", "b2")]),
            batch(3, vec![long_topic("Beta", "b3")]),
        ];
        let gw = Gateway::new(
            Arc::new(MockBackend::new()),
            TokenBudget {
                max_input_tokens: 700,
                max_output_tokens: 16_000,
                safety_margin: 0.0,
            },
            CostModel::default(),
        );
        let out = dedup_llm(&results, &gw, &GenerationParams::default()).unwrap();
        assert_eq!(out.method, DedupMethod::Llm);
        assert_eq!(out.topics.len(), 2);
        // Provenance composes back to the original batches.
        let alpha = &out.provenance["Alpha"];
        assert_eq!(alpha.len(), 2);
        assert!(alpha.contains(&(0, "Alpha".to_string())));
        assert!(alpha.contains(&(1, "Alpha".to_string())));
        let beta = &out.provenance["Beta"];
        assert!(beta.contains(&(2, "Beta".to_string())));
        assert!(beta.contains(&(3, "Beta".to_string())));
        assert_eq!(gw.live_call_count(), 3);
    }
}
