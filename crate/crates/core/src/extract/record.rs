use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize};

use super::dates::CalendarDate;
use super::segment::{segment, Sentence};

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("malformed patient record: {0}")]
    Schema(String),
    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),
    #[error("document `{0}` has empty text")]
    EmptyDocument(String),
    #[error("patient record has no documents or structured fields")]
    EmptyRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocType {
    Note,
    Lab,
    Imaging,
    Path,
    Structured,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub doc_id: String,
    pub doc_type: DocType,
    pub date: CalendarDate,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientRecord {
    pub patient_id: String,
    #[serde(default, deserialize_with = "scalar_map")]
    pub structured_fields: BTreeMap<String, String>,
    pub documents: Vec<Document>,
}

/// Accepts any JSON scalar as a structured field value.
fn scalar_map<'de, D: Deserializer<'de>>(deserializer: D) -> Result<BTreeMap<String, String>, D::Error> {
    let raw = BTreeMap::<String, serde_json::Value>::deserialize(deserializer)?;
    raw.into_iter()
        .map(|(k, v)| {
            let text = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                other => {
                    return Err(serde::de::Error::custom(format!(
                        "structured field `{k}` must be a scalar, got {other}"
                    )))
                }
            };
            Ok((k, text))
        })
        .collect()
}

impl PatientRecord {
    pub fn from_json(bytes: &[u8]) -> Result<Self, RecordError> {
        let record: PatientRecord =
            serde_json::from_slice(bytes).map_err(|e| RecordError::Schema(e.to_string()))?;
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.patient_id.trim().is_empty() {
            return Err(RecordError::Schema("patient_id is empty".into()));
        }
        if self.documents.is_empty() && self.structured_fields.is_empty() {
            return Err(RecordError::EmptyRecord);
        }
        let mut seen = BTreeSet::new();
        for doc in &self.documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(RecordError::DuplicateDocument(doc.doc_id.clone()));
            }
            if doc.text.is_empty() {
                return Err(RecordError::EmptyDocument(doc.doc_id.clone()));
            }
        }
        Ok(())
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }
}

/// A validated record with every document split into sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedRecord {
    pub record: PatientRecord,
    pub sentences: BTreeMap<String, Vec<Sentence>>,
}

impl SegmentedRecord {
    pub fn new(record: PatientRecord) -> Result<Self, RecordError> {
        record.validate()?;
        let sentences = record
            .documents
            .iter()
            .map(|d| (d.doc_id.clone(), segment(&d.doc_id, &d.text)))
            .collect();
        Ok(SegmentedRecord { record, sentences })
    }

    pub fn sentence(&self, doc_id: &str, index: usize) -> Option<&Sentence> {
        self.sentences.get(doc_id)?.get(index)
    }

    /// All sentences in document order.
    pub fn all_sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.record
            .documents
            .iter()
            .flat_map(|d| self.sentences[&d.doc_id].iter())
    }
}
