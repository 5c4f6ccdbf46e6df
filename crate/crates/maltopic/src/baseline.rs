//! Input preparation for external baseline tools (LDA, BERTopic):
//! concatenate structured and free-text responses per record, then apply
//! classical cleanup. Lemmatization is deliberately not applied and the
//! output metadata says so.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{FieldSchema, SurveyRecord};
use crate::metrics::normalize_text;

/// All non-empty field values of one record, in schema order,
/// space-separated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcatenatedDocument {
    pub record_id: String,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization failure: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn concatenate_record(record: &SurveyRecord, schema: &[FieldSchema]) -> ConcatenatedDocument {
    let parts: Vec<&str> = schema
        .iter()
        .filter_map(|field| record.value(&field.name))
        .filter(|v| !v.is_empty())
        .collect();
    ConcatenatedDocument {
        record_id: record.record_id.clone(),
        text: parts.join(" "),
    }
}

/// Lowercases, strips punctuation, collapses whitespace, and removes
/// stopwords from the emitted text. Document count is preserved.
pub fn preprocess_for_baseline(
    docs: &[ConcatenatedDocument],
    stopwords: &HashSet<String>,
) -> Vec<ConcatenatedDocument> {
    docs.iter()
        .map(|doc| {
            let normalized = normalize_text(&doc.text);
            let cleaned: Vec<&str> = normalized
                .split_whitespace()
                .filter(|t| !stopwords.contains(*t))
                .collect();
            ConcatenatedDocument {
                record_id: doc.record_id.clone(),
                text: cleaned.join(" "),
            }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BaselineSidecar {
    /// Line number (0-based) in the corpus file -> record id.
    pub lines: Vec<String>,
    pub lemmatization_applied: bool,
    pub note: String,
}

/// Writes one document per line to `corpus.txt` plus a JSON sidecar mapping
/// line numbers to record ids. Embedded newlines become spaces so the
/// line-per-document contract holds.
pub fn write_baseline_corpus(
    docs: &[ConcatenatedDocument],
    out_dir: &Path,
) -> Result<(), BaselineError> {
    std::fs::create_dir_all(out_dir)?;
    let mut body = String::new();
    let mut lines = Vec::with_capacity(docs.len());
    for doc in docs {
        body.push_str(&doc.text.replace(['\n', '\r'], " "));
        body.push('\n');
        lines.push(doc.record_id.clone());
    }
    std::fs::write(out_dir.join("corpus.txt"), body)?;
    let sidecar = BaselineSidecar {
        lines,
        lemmatization_applied: false,
        note: "corpus is cleaned but not lemmatized; apply lemmatization externally if the \
               downstream tool expects it"
            .to_string(),
    };
    std::fs::write(
        out_dir.join("corpus_meta.json"),
        serde_json::to_vec_pretty(&sidecar)?,
    )?;
    Ok(())
}
