//! Topic-quality metrics: word coherence (average PMI over representative
//! word pairs), word diversity, average inter-topic embedding similarity,
//! and document coverage.

mod embed;

pub use embed::{HttpEmbedder, MockEmbedder};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topics::Topic;

/// Stopwords stripped during tokenization when the caller supplies none.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "i",
    "if", "in", "into", "is", "it", "its", "my", "no", "not", "of", "on", "or", "our", "so",
    "such", "that", "the", "their", "them", "then", "there", "these", "they", "this", "to",
    "was", "we", "were", "which", "will", "with", "you", "your",
];

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub doc_id: String,
    /// Lowercased, punctuation replaced by spaces, whitespace collapsed.
    /// Retains stopwords so multi-word phrase matching sees the full text.
    pub normalized_text: String,
    /// Whitespace-split tokens with stopwords removed.
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedCorpus {
    pub documents: Vec<TokenizedDoc>,
    pub token_doc_frequency: BTreeMap<String, usize>,
}

impl TokenizedCorpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceConfig {
    pub smoothing_epsilon: f64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        CoherenceConfig {
            smoothing_epsilon: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub theta: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig { theta: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Self {
        EmbeddingVector { components }
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, MetricsError>;
    fn dimension(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub coherence: f64,
    pub diversity: f64,
    /// Absent when fewer than two topics exist.
    pub avg_similarity: Option<f64>,
    pub coverage: f64,
    pub per_topic_coherence: BTreeMap<String, f64>,
    pub covered_doc_ids: Vec<String>,
    pub flags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("no topics to evaluate")]
    EmptyTopics,
    #[error("topics contain no representative words")]
    NoWords,
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine undefined for a zero vector")]
    ZeroVector,
    #[error("average similarity needs at least 2 topics, got {0}")]
    TooFewTopics(usize),
    #[error("embedding provider failure: {0}")]
    Embed(String),
}

/// Lowercases, maps punctuation to spaces, and collapses whitespace.
pub fn normalize_text(text: &str) -> String {
    let lowered = text.to_lowercase();
    let replaced: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    replaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalizes each document and builds token lists (stopwords removed) plus
/// a token document-frequency table.
pub fn normalize_and_tokenize(
    raw_texts: &[(String, String)],
    stopwords: &HashSet<String>,
) -> TokenizedCorpus {
    let mut documents = Vec::with_capacity(raw_texts.len());
    let mut token_doc_frequency: BTreeMap<String, usize> = BTreeMap::new();
    for (doc_id, text) in raw_texts {
        let normalized_text = normalize_text(text);
        let tokens: Vec<String> = normalized_text
            .split_whitespace()
            .filter(|t| !stopwords.contains(*t))
            .map(str::to_string)
            .collect();
        for token in tokens.iter().collect::<HashSet<_>>() {
            *token_doc_frequency.entry(token.clone()).or_insert(0) += 1;
        }
        documents.push(TokenizedDoc {
            doc_id: doc_id.clone(),
            normalized_text,
            tokens,
        });
    }
    TokenizedCorpus {
        documents,
        token_doc_frequency,
    }
}

/// True iff the normalized phrase occurs in the document's normalized text
/// at token boundaries ("job" does not match inside "jobs").
pub fn phrase_occurs(phrase: &str, document: &TokenizedDoc) -> bool {
    let normalized = normalize_text(phrase);
    if normalized.is_empty() {
        return false;
    }
    let padded_doc = format!(" {} ", document.normalized_text);
    padded_doc.contains(&format!(" {normalized} "))
}

fn document_frequency(phrase: &str, corpus: &TokenizedCorpus) -> usize {
    corpus
        .documents
        .iter()
        .filter(|d| phrase_occurs(phrase, d))
        .count()
}

fn joint_frequency(a: &str, b: &str, corpus: &TokenizedCorpus) -> usize {
    corpus
        .documents
        .iter()
        .filter(|d| phrase_occurs(a, d) && phrase_occurs(b, d))
        .count()
}

/// Smoothed PMI with whole-document co-occurrence:
/// `ln((p(a,b)+eps) / ((p(a)+eps) * (p(b)+eps)))` where probabilities are
/// document-frequency fractions.
pub fn pmi(a: &str, b: &str, corpus: &TokenizedCorpus, config: &CoherenceConfig) -> f64 {
    let n = corpus.len() as f64;
    let eps = config.smoothing_epsilon;
    let p_a = document_frequency(a, corpus) as f64 / n;
    let p_b = document_frequency(b, corpus) as f64 / n;
    let p_ab = joint_frequency(a, b, corpus) as f64 / n;
    ((p_ab + eps) / ((p_a + eps) * (p_b + eps))).ln()
}

/// Per topic, the mean PMI over all distinct unordered pairs of its
/// representative words; overall is the mean of per-topic scores. Topics
/// with fewer than two words score 0 and are flagged.
pub fn coherence(
    topics: &[Topic],
    corpus: &TokenizedCorpus,
    config: &CoherenceConfig,
) -> Result<(f64, BTreeMap<String, f64>, Vec<String>), MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut per_topic = BTreeMap::new();
    let mut flagged = Vec::new();
    for topic in topics {
        let words = &topic.representative_words;
        if words.len() < 2 {
            per_topic.insert(topic.name.clone(), 0.0);
            flagged.push(topic.name.clone());
            continue;
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..words.len() {
            for j in (i + 1)..words.len() {
                sum += pmi(&words[i], &words[j], corpus, config);
                pairs += 1;
            }
        }
        per_topic.insert(topic.name.clone(), sum / pairs as f64);
    }
    let overall = if per_topic.is_empty() {
        0.0
    } else {
        per_topic.values().sum::<f64>() / per_topic.len() as f64
    };
    Ok((overall, per_topic, flagged))
}

/// Unique representative words (case-insensitive) over the total word count.
pub fn diversity(topics: &[Topic]) -> Result<f64, MetricsError> {
    let mut unique = HashSet::new();
    let mut total = 0usize;
    for topic in topics {
        for word in &topic.representative_words {
            unique.insert(word.trim().to_lowercase());
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::NoWords);
    }
    Ok(unique.len() as f64 / total as f64)
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, MetricsError> {
    if u.dimension() != v.dimension() {
        return Err(MetricsError::DimensionMismatch(u.dimension(), v.dimension()));
    }
    let norm_u = u.norm();
    let norm_v = v.norm();
    if norm_u == 0.0 || norm_v == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    let dot: f64 = u
        .components
        .iter()
        .zip(&v.components)
        .map(|(a, b)| a * b)
        .sum();
    Ok(dot / (norm_u * norm_v))
}

/// The text a topic embeds as: name, description, and representative words
/// joined with single spaces.
pub fn topic_canonical_text(topic: &Topic) -> String {
    let mut parts = vec![topic.name.clone(), topic.description.clone()];
    parts.extend(topic.representative_words.iter().cloned());
    parts.join(" ")
}

/// Mean cosine over all ordered topic pairs i != j, i.e. `sum / (n(n-1))`.
/// Cosine is symmetric, so this equals the unordered-pair mean.
pub fn avg_topic_similarity(topics: &[Topic], embedder: &dyn Embedder) -> Result<f64, MetricsError> {
    let n = topics.len();
    if n < 2 {
        return Err(MetricsError::TooFewTopics(n));
    }
    let vectors: Vec<EmbeddingVector> = topics
        .iter()
        .map(|t| embedder.embed(&topic_canonical_text(t)))
        .collect::<Result<_, _>>()?;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += cosine(&vectors[i], &vectors[j])?;
            }
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

/// Fraction of documents whose best topic cosine meets the threshold.
/// Documents that embed to the zero vector score 0.
pub fn coverage(
    corpus: &TokenizedCorpus,
    topics: &[Topic],
    embedder: &dyn Embedder,
    config: &CoverageConfig,
) -> Result<(f64, Vec<String>), MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    if topics.is_empty() {
        return Err(MetricsError::EmptyTopics);
    }
    let topic_vectors: Vec<EmbeddingVector> = topics
        .iter()
        .map(|t| embedder.embed(&topic_canonical_text(t)))
        .collect::<Result<_, _>>()?;

    let mut covered = Vec::new();
    for doc in &corpus.documents {
        let doc_vector = embedder.embed(&doc.normalized_text)?;
        let mut best: f64 = 0.0;
        if doc_vector.norm() > 0.0 {
            for tv in &topic_vectors {
                best = best.max(cosine(&doc_vector, tv)?);
            }
        }
        if best >= config.theta {
            covered.push(doc.doc_id.clone());
        }
    }
    let fraction = covered.len() as f64 / corpus.len() as f64;
    Ok((fraction, covered))
}

/// Assembles all four metrics over the same inputs. Deterministic for a
/// deterministic embedder.
pub fn evaluate(
    topics: &[Topic],
    corpus: &TokenizedCorpus,
    embedder: &dyn Embedder,
    coherence_config: &CoherenceConfig,
    coverage_config: &CoverageConfig,
) -> Result<MetricsReport, MetricsError> {
    if topics.is_empty() {
        return Err(MetricsError::EmptyTopics);
    }
    let (overall, per_topic, flagged) = coherence(topics, corpus, coherence_config)?;
    let diversity_score = diversity(topics)?;
    let mut flags: Vec<String> = flagged
        .into_iter()
        .map(|name| format!("topic `{name}` has fewer than 2 representative words; coherence 0"))
        .collect();
    let avg_similarity = match avg_topic_similarity(topics, embedder) {
        Ok(value) => Some(value),
        Err(MetricsError::TooFewTopics(_)) => {
            flags.push("too-few-topics: average similarity needs at least 2 topics".to_string());
            None
        }
        Err(other) => return Err(other),
    };
    let (coverage_fraction, covered_doc_ids) = coverage(corpus, topics, embedder, coverage_config)?;
    Ok(MetricsReport {
        coherence: overall,
        diversity: diversity_score,
        avg_similarity,
        coverage: coverage_fraction,
        per_topic_coherence: per_topic,
        covered_doc_ids,
        flags,
    })
}
