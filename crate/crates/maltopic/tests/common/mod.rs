//! Shared fixtures and independent brute-force oracles for integration
//! tests. Oracles deliberately avoid the library's internals: they tokenize,
//! count, and compute cosines from scratch.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use maltopic::Topic;

pub fn topic(name: &str, words: &[&str]) -> Topic {
    Topic {
        name: name.to_string(),
        description: format!("Survey responses about {}", name.to_lowercase()),
        respondent_profile: "Survey respondents".to_string(),
        representative_words: words.iter().map(|w| w.to_string()).collect(),
    }
}

/// The ten-topic concerns fixture used across dedup and report tests.
pub fn table1_topics() -> Vec<Topic> {
    vec![
        topic("Job Displacement Concerns", &["displacement", "automation", "job loss", "security", "anxiety"]),
        topic("Skill Gaps and Training Needs", &["skills", "training", "gap", "upskill", "education"]),
        topic("Data Privacy and Security Issues", &["privacy", "security", "data", "protection", "risk"]),
        topic("Reliability and Trust in AI Tools", &["reliability", "trust", "accuracy", "hallucinations", "skepticism"]),
        topic("Ethical Implications of AI", &["ethics", "bias", "fairness", "responsibility", "implications"]),
        topic("Impact on Job Market Dynamics", &["job market", "hiring", "availability", "competition", "dynamics"]),
        topic("Integration Challenges of AI Tools", &["integration", "challenges", "workflows", "adoption", "resistance"]),
        topic("Cost Implications of AI Adoption", &["cost", "financial", "budget", "investment", "implications"]),
        topic("Changing Role of Human Input", &["human input", "creativity", "relevance", "skills", "automation"]),
        topic("Resistance to AI Adoption", &["Resistance", "adoption", "culture", "innovation", "productivity"]),
    ]
}

// ---------------------------------------------------------------------------
// Oracle helpers
// ---------------------------------------------------------------------------

fn oracle_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Phrase occurrence as a contiguous token subsequence; an independent route
/// from the library's padded-substring check.
pub fn oracle_phrase_occurs(phrase: &str, doc_text: &str) -> bool {
    let phrase_tokens = oracle_tokens(phrase);
    let doc_tokens = oracle_tokens(doc_text);
    if phrase_tokens.is_empty() || phrase_tokens.len() > doc_tokens.len() {
        return false;
    }
    doc_tokens
        .windows(phrase_tokens.len())
        .any(|window| window == phrase_tokens.as_slice())
}

/// Brute-force smoothed-PMI coherence: enumerate every document for every
/// phrase and pair.
pub fn oracle_coherence(topics: &[Topic], doc_texts: &[String], epsilon: f64) -> f64 {
    let n = doc_texts.len() as f64;
    let mut per_topic = Vec::new();
    for t in topics {
        let words = &t.representative_words;
        if words.len() < 2 {
            per_topic.push(0.0);
            continue;
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..words.len() {
            for j in (i + 1)..words.len() {
                let df_i = doc_texts.iter().filter(|d| oracle_phrase_occurs(&words[i], d)).count() as f64;
                let df_j = doc_texts.iter().filter(|d| oracle_phrase_occurs(&words[j], d)).count() as f64;
                let df_ij = doc_texts
                    .iter()
                    .filter(|d| oracle_phrase_occurs(&words[i], d) && oracle_phrase_occurs(&words[j], d))
                    .count() as f64;
                let p_i = df_i / n;
                let p_j = df_j / n;
                let p_ij = df_ij / n;
                sum += ((p_ij + epsilon) / ((p_i + epsilon) * (p_j + epsilon))).ln();
                pairs += 1;
            }
        }
        per_topic.push(sum / pairs as f64);
    }
    if per_topic.is_empty() {
        0.0
    } else {
        per_topic.iter().sum::<f64>() / per_topic.len() as f64
    }
}

/// Explicit-vocabulary bag-of-words vector.
pub fn oracle_bow(text: &str, vocab: &BTreeSet<String>) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for token in oracle_tokens(text) {
        if vocab.contains(&token) {
            *counts.entry(token).or_insert(0.0) += 1.0;
        }
    }
    counts
}

pub fn oracle_cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(k, va)| b.get(k).map(|vb| va * vb))
        .sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Brute-force coverage: every document against every topic canonical text.
pub fn oracle_coverage(topics: &[Topic], doc_texts: &[String], theta: f64) -> f64 {
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    for d in doc_texts {
        vocab.extend(oracle_tokens(d));
    }
    for t in topics {
        vocab.extend(oracle_tokens(&oracle_canonical_text(t)));
    }
    let topic_vectors: Vec<_> = topics
        .iter()
        .map(|t| oracle_bow(&oracle_canonical_text(t), &vocab))
        .collect();
    let covered = doc_texts
        .iter()
        .filter(|d| {
            let dv = oracle_bow(d, &vocab);
            let best = topic_vectors
                .iter()
                .map(|tv| oracle_cosine(&dv, tv))
                .fold(0.0f64, f64::max);
            best >= theta
        })
        .count();
    covered as f64 / doc_texts.len() as f64
}

pub fn oracle_canonical_text(topic: &Topic) -> String {
    let mut parts = vec![topic.name.clone(), topic.description.clone()];
    parts.extend(topic.representative_words.iter().cloned());
    parts.join(" ")
}
