//! Loading and validating mixed structured/free-text survey data from
//! delimited files.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    FreeText,
    Structured,
}

/// One survey question: its column name and whether it is an open-ended
/// free-text field or a structured/categorical one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl FieldSchema {
    pub fn free_text(name: &str) -> Self {
        FieldSchema {
            name: name.to_string(),
            kind: FieldKind::FreeText,
            description: None,
        }
    }

    pub fn structured(name: &str) -> Self {
        FieldSchema {
            name: name.to_string(),
            kind: FieldKind::Structured,
            description: None,
        }
    }
}

/// One respondent row. `values` holds every schema field, possibly empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub record_id: String,
    pub values: BTreeMap<String, String>,
}

impl SurveyRecord {
    pub fn value(&self, field: &str) -> Option<&str> {
        self.values.get(field).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDataset {
    pub schema: Vec<FieldSchema>,
    pub records: Vec<SurveyRecord>,
}

impl SurveyDataset {
    pub fn field(&self, name: &str) -> Option<&FieldSchema> {
        self.schema.iter().find(|f| f.name == name)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema field `{0}` is missing from the file header")]
    MissingColumn(String),
    #[error("malformed row {row}: expected {expected} fields, found {found}")]
    MalformedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv failure: {0}")]
    Csv(csv::Error),
}

impl From<csv::Error> for IngestError {
    fn from(err: csv::Error) -> Self {
        if let csv::ErrorKind::UnequalLengths { pos, expected_len, len } = err.kind() {
            return IngestError::MalformedRow {
                row: pos.as_ref().map(|p| p.record() as usize).unwrap_or(0),
                expected: *expected_len as usize,
                found: *len as usize,
            };
        }
        IngestError::Csv(err)
    }
}

/// A single validation finding; data, not a failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub record_id: String,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "record `{}` field `{}`: {}", self.record_id, field, self.message),
            None => write!(f, "record `{}`: {}", self.record_id, self.message),
        }
    }
}

fn check_schema(schema: &[FieldSchema]) -> Result<(), IngestError> {
    let mut seen = HashSet::new();
    for field in schema {
        if field.name.is_empty() {
            return Err(IngestError::InvalidSchema("empty field name".into()));
        }
        if !seen.insert(field.name.as_str()) {
            return Err(IngestError::InvalidSchema(format!(
                "duplicate field name `{}`",
                field.name
            )));
        }
    }
    Ok(())
}

/// Loads a comma-separated UTF-8 file with a header row into a dataset.
///
/// Record ids come from an `id` column when present, otherwise from the
/// 0-based row index. Row order is preserved.
pub fn load_dataset(path: &Path, schema: &[FieldSchema]) -> Result<SurveyDataset, IngestError> {
    check_schema(schema)?;
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let headers = reader.headers()?.clone();

    let mut column_index: BTreeMap<String, usize> = BTreeMap::new();
    for field in schema {
        let idx = headers
            .iter()
            .position(|h| h == field.name)
            .ok_or_else(|| IngestError::MissingColumn(field.name.clone()))?;
        column_index.insert(field.name.clone(), idx);
    }
    let id_index = headers.iter().position(|h| h == "id");

    let mut records = Vec::new();
    let mut seen_ids = HashSet::new();
    for (row, result) in reader.records().enumerate() {
        let record = result?;
        let record_id = match id_index {
            Some(idx) => record.get(idx).unwrap_or("").to_string(),
            None => row.to_string(),
        };
        if !seen_ids.insert(record_id.clone()) {
            return Err(IngestError::DuplicateId(record_id));
        }
        let mut values = BTreeMap::new();
        for (name, &idx) in &column_index {
            let value = record.get(idx).ok_or(IngestError::MalformedRow {
                row,
                expected: headers.len(),
                found: record.len(),
            })?;
            values.insert(name.clone(), value.to_string());
        }
        records.push(SurveyRecord { record_id, values });
    }

    Ok(SurveyDataset {
        schema: schema.to_vec(),
        records,
    })
}

/// Writes a dataset back out as CSV with an explicit `id` column followed by
/// the schema columns. `load_dataset` on the output reproduces the input.
pub fn save_dataset(dataset: &SurveyDataset, path: &Path) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(dataset.schema.iter().map(|f| f.name.clone()));
    writer.write_record(&header)?;
    for record in &dataset.records {
        let mut row = vec![record.record_id.clone()];
        for field in &dataset.schema {
            row.push(record.value(&field.name).unwrap_or("").to_string());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Checks every record against the schema and reports violations.
pub fn validate_dataset(dataset: &SurveyDataset) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if let Err(err) = check_schema(&dataset.schema) {
        issues.push(ValidationIssue {
            record_id: String::new(),
            field: None,
            message: err.to_string(),
        });
    }
    let schema_names: HashSet<&str> = dataset.schema.iter().map(|f| f.name.as_str()).collect();
    let mut seen_ids: HashSet<&str> = HashSet::new();
    for record in &dataset.records {
        if !seen_ids.insert(record.record_id.as_str()) {
            issues.push(ValidationIssue {
                record_id: record.record_id.clone(),
                field: None,
                message: "duplicate record id".into(),
            });
        }
        for field in &dataset.schema {
            if !record.values.contains_key(&field.name) {
                issues.push(ValidationIssue {
                    record_id: record.record_id.clone(),
                    field: Some(field.name.clone()),
                    message: "missing schema field".into(),
                });
            }
        }
        for name in record.values.keys() {
            if !schema_names.contains(name.as_str()) {
                issues.push(ValidationIssue {
                    record_id: record.record_id.clone(),
                    field: Some(name.clone()),
                    message: "field not declared in schema".into(),
                });
            }
        }
    }
    issues
}
