use std::collections::BTreeMap;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::record::SegmentedRecord;
use super::tools::ToolRegistry;
use crate::kb::DecisionFactor;
use crate::rule::TriBool;

/// A sentence reference returned by a backend, optionally echoing the text
/// it believes the sentence contains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedSentence {
    pub doc_id: String,
    pub sentence_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echoed_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorReply {
    pub value: TriBool,
    pub explanation: String,
    #[serde(default)]
    pub citations: Vec<CitedSentence>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ExtractorError {
    #[error("extractor unavailable: {0}")]
    Unavailable(String),
    #[error("extractor reply rejected: {0}")]
    InvalidReply(String),
}

pub struct ExtractionRequest<'a> {
    pub factor: &'a DecisionFactor,
    pub record: &'a SegmentedRecord,
    pub tools: &'a ToolRegistry,
}

/// A backend that answers one decision-factor question over a record.
pub trait Extractor: Send + Sync {
    /// Recorded on every answer this backend produces.
    fn id(&self) -> &str;

    /// Whether `answer` may be called from several threads at once.
    fn is_concurrent(&self) -> bool {
        true
    }

    fn answer(&self, request: &ExtractionRequest<'_>) -> Result<ExtractorReply, ExtractorError>;
}

impl<E: Extractor + ?Sized> Extractor for &E {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn is_concurrent(&self) -> bool {
        (**self).is_concurrent()
    }

    fn answer(&self, request: &ExtractionRequest<'_>) -> Result<ExtractorReply, ExtractorError> {
        (**self).answer(request)
    }
}

impl<E: Extractor + ?Sized> Extractor for Box<E> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn is_concurrent(&self) -> bool {
        (**self).is_concurrent()
    }

    fn answer(&self, request: &ExtractionRequest<'_>) -> Result<ExtractorReply, ExtractorError> {
        (**self).answer(request)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MockConfigError {
    #[error("malformed mock extractor config: {0}")]
    Schema(String),
    #[error("factor `{factor}`: invalid pattern: {source}")]
    Pattern {
        factor: String,
        #[source]
        source: regex::Error,
    },
    #[error("factor `{factor}`: {field} must be one of {allowed}")]
    Value {
        factor: String,
        field: &'static str,
        allowed: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub pattern: String,
    pub value_if_match: TriBool,
    pub value_if_absent: TriBool,
}

#[derive(Debug)]
struct CompiledRule {
    rule: MockRule,
    regex: Regex,
}

/// Deterministic keyword backend driven by a config of per-factor patterns.
///
/// A pattern wrapped in slashes (`/stage (iii|iv)/`) is a regular
/// expression; anything else is a case-insensitive substring. Every matching
/// sentence is cited.
#[derive(Debug)]
pub struct MockExtractor {
    id: String,
    rules: BTreeMap<String, CompiledRule>,
}

impl MockExtractor {
    pub fn new(rules: BTreeMap<String, MockRule>) -> Result<Self, MockConfigError> {
        let compiled = rules
            .into_iter()
            .map(|(factor, rule)| {
                if rule.value_if_match == TriBool::Unknown {
                    return Err(MockConfigError::Value {
                        factor,
                        field: "value_if_match",
                        allowed: "yes|no",
                    });
                }
                if rule.value_if_absent == TriBool::True {
                    return Err(MockConfigError::Value {
                        factor,
                        field: "value_if_absent",
                        allowed: "unknown|no",
                    });
                }
                let source = match rule.pattern.strip_prefix('/').and_then(|p| p.strip_suffix('/')) {
                    Some(re) if !re.is_empty() => re.to_string(),
                    _ => regex::escape(&rule.pattern),
                };
                let regex = RegexBuilder::new(&source)
                    .case_insensitive(true)
                    .build()
                    .map_err(|source| MockConfigError::Pattern {
                        factor: factor.clone(),
                        source,
                    })?;
                Ok((factor, CompiledRule { rule, regex }))
            })
            .collect::<Result<_, _>>()?;
        Ok(MockExtractor {
            id: "mock".into(),
            rules: compiled,
        })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, MockConfigError> {
        let rules: BTreeMap<String, MockRule> =
            serde_json::from_slice(bytes).map_err(|e| MockConfigError::Schema(e.to_string()))?;
        Self::new(rules)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

impl Extractor for MockExtractor {
    fn id(&self) -> &str {
        &self.id
    }

    fn answer(&self, request: &ExtractionRequest<'_>) -> Result<ExtractorReply, ExtractorError> {
        let name = &request.factor.name;
        let Some(compiled) = self.rules.get(name) else {
            return Ok(ExtractorReply {
                value: TriBool::Unknown,
                explanation: format!("No pattern is configured for `{name}`."),
                citations: vec![],
            });
        };
        let citations: Vec<CitedSentence> = request
            .record
            .all_sentences()
            .filter(|s| compiled.regex.is_match(&s.text))
            .map(|s| CitedSentence {
                doc_id: s.doc_id.clone(),
                sentence_index: s.index,
                echoed_text: Some(s.text.clone()),
            })
            .collect();
        let pattern = &compiled.rule.pattern;
        if citations.is_empty() {
            Ok(ExtractorReply {
                value: compiled.rule.value_if_absent,
                explanation: format!("No sentence in the record matches {pattern:?}."),
                citations,
            })
        } else {
            let places: Vec<String> = citations
                .iter()
                .map(|c| format!("{}[{}]", c.doc_id, c.sentence_index))
                .collect();
            Ok(ExtractorReply {
                value: compiled.rule.value_if_match,
                explanation: format!("Matched {pattern:?} in {}.", places.join(", ")),
                citations,
            })
        }
    }
}
