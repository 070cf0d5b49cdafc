use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::extractor::{CitedSentence, ExtractionRequest, Extractor};
use super::record::SegmentedRecord;
use super::tools::{eval_date_expression, is_date_expression, ToolRegistry};
use crate::kb::{DecisionFactor, EffectiveKB};
use crate::rule::{Assignment, TriBool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnswerSource {
    Extractor,
    Clinician,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Citation {
    pub doc_id: String,
    pub sentence_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorAnswer {
    pub factor_name: String,
    pub value: TriBool,
    pub explanation: String,
    pub citations: Vec<Citation>,
    pub source: AnswerSource,
    pub extractor_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CitationFailure {
    UnknownDocument,
    OutOfRange { sentences: usize },
    TextMismatch { echoed: String, stored: String },
}

impl fmt::Display for CitationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CitationFailure::UnknownDocument => f.write_str("no such document"),
            CitationFailure::OutOfRange { sentences } => {
                write!(f, "sentence index out of range (document has {sentences})")
            }
            CitationFailure::TextMismatch { echoed, stored } => {
                write!(f, "echoed text {echoed:?} does not match stored {stored:?}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("citation #{which} ({doc_id}[{sentence_index}]): {reason}")]
pub struct CitationError {
    pub which: usize,
    pub doc_id: String,
    pub sentence_index: usize,
    pub reason: CitationFailure,
}

/// Checks that every citation names an existing sentence and, when the
/// backend echoed text, that it equals the stored sentence byte for byte.
pub fn validate_citations(citations: &[CitedSentence], record: &SegmentedRecord) -> Result<(), CitationError> {
    for (which, c) in citations.iter().enumerate() {
        let fail = |reason| CitationError {
            which,
            doc_id: c.doc_id.clone(),
            sentence_index: c.sentence_index,
            reason,
        };
        let Some(sentences) = record.sentences.get(&c.doc_id) else {
            return Err(fail(CitationFailure::UnknownDocument));
        };
        let Some(sentence) = sentences.get(c.sentence_index) else {
            return Err(fail(CitationFailure::OutOfRange {
                sentences: sentences.len(),
            }));
        };
        if let Some(echoed) = &c.echoed_text {
            if echoed != &sentence.text {
                return Err(fail(CitationFailure::TextMismatch {
                    echoed: echoed.clone(),
                    stored: sentence.text.clone(),
                }));
            }
        }
    }
    Ok(())
}

impl FactorAnswer {
    pub fn validate_citations(&self, record: &SegmentedRecord) -> Result<(), CitationError> {
        let cited: Vec<CitedSentence> = self
            .citations
            .iter()
            .map(|c| CitedSentence {
                doc_id: c.doc_id.clone(),
                sentence_index: c.sentence_index,
                echoed_text: None,
            })
            .collect();
        validate_citations(&cited, record)
    }
}

/// Answers one factor.
///
/// A structured field named after the factor takes precedence: a yes/no
/// value is used directly and a date expression is evaluated locally.
/// Otherwise the extractor is asked. Transport failures and unverifiable
/// citations both turn into `Unknown` answers with a diagnostic explanation.
pub fn extract_factor(
    factor: &DecisionFactor,
    record: &SegmentedRecord,
    extractor: &dyn Extractor,
    tools: &ToolRegistry,
) -> FactorAnswer {
    let answer = |value, explanation: String, citations| FactorAnswer {
        factor_name: factor.name.clone(),
        value,
        explanation,
        citations,
        source: AnswerSource::Extractor,
        extractor_id: extractor.id().to_string(),
    };

    if let Some(field) = record.record.structured_fields.get(&factor.name) {
        if let Ok(value) = field.parse::<TriBool>() {
            return answer(value, format!("Structured field `{}` is {field:?}.", factor.name), vec![]);
        }
        if is_date_expression(field) {
            return match eval_date_expression(field, &record.record.structured_fields) {
                Ok((value, explanation)) => answer(value, explanation, vec![]),
                Err(e) => answer(TriBool::Unknown, format!("Date calculation failed: {e}."), vec![]),
            };
        }
    }

    let request = ExtractionRequest { factor, record, tools };
    let reply = match extractor.answer(&request) {
        Ok(reply) => reply,
        Err(e) => return answer(TriBool::Unknown, format!("No answer: {e}."), vec![]),
    };
    if let Err(e) = validate_citations(&reply.citations, record) {
        return answer(
            TriBool::Unknown,
            format!(
                "Extractor answered {} but the answer was rejected: {e}. Original explanation: {}",
                reply.value, reply.explanation
            ),
            vec![],
        );
    }
    let mut citations: Vec<Citation> = reply
        .citations
        .into_iter()
        .map(|c| Citation {
            doc_id: c.doc_id,
            sentence_index: c.sentence_index,
        })
        .collect();
    citations.dedup();
    answer(reply.value, reply.explanation, citations)
}

/// Extracted answers for a record against a stack of knowledge bases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub record_ref: String,
    pub kb_ref: Vec<String>,
    pub answers: BTreeMap<String, FactorAnswer>,
}

impl AnswerSet {
    pub fn get(&self, factor: &str) -> Option<&FactorAnswer> {
        self.answers.get(factor)
    }

    pub fn assignment(&self) -> Assignment {
        self.answers.iter().map(|(k, a)| (k.clone(), a.value)).collect()
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no rule references any decision factor")]
    EmptyFactorSet,
}

/// Answers every factor referenced by a merged rule. Runs factors in
/// parallel unless the extractor declares itself serial; the result does not
/// depend on scheduling.
pub fn extract_all(
    ekb: &EffectiveKB,
    record: &SegmentedRecord,
    extractor: &dyn Extractor,
    tools: &ToolRegistry,
) -> Result<AnswerSet, ExtractError> {
    let required = ekb.required_factors();
    if required.is_empty() {
        return Err(ExtractError::EmptyFactorSet);
    }
    let factors: Vec<DecisionFactor> = required
        .iter()
        .map(|name| {
            ekb.factor(name).cloned().unwrap_or_else(|| DecisionFactor {
                name: name.clone(),
                question: name.replace('_', " "),
                description: None,
            })
        })
        .collect();
    let run = |f: &DecisionFactor| (f.name.clone(), extract_factor(f, record, extractor, tools));
    let answers: BTreeMap<String, FactorAnswer> = if extractor.is_concurrent() {
        factors.par_iter().map(run).collect()
    } else {
        factors.iter().map(run).collect()
    };
    Ok(AnswerSet {
        record_ref: record.record.patient_id.clone(),
        kb_ref: ekb.stack_labels(),
        answers,
    })
}
