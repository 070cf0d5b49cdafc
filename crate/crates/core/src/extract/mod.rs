//! Patient records, sentence segmentation, pluggable extractors and the
//! factor-extraction pipeline.

pub mod dates;
mod extractor;
pub mod llm;
mod pipeline;
mod record;
mod segment;
mod tools;

pub use dates::{age_at, days_between, CalendarDate, DateError};
pub use extractor::{
    CitedSentence, ExtractionRequest, Extractor, ExtractorError, ExtractorReply, MockConfigError, MockExtractor,
    MockRule,
};
pub use llm::{LlmConfig, LlmExtractor};
pub use pipeline::{
    extract_all, extract_factor, validate_citations, AnswerSet, AnswerSource, Citation, CitationError,
    CitationFailure, ExtractError, FactorAnswer,
};
pub use record::{DocType, Document, PatientRecord, RecordError, SegmentedRecord};
pub use segment::{segment, Sentence};
pub use tools::{eval_date_expression, is_date_expression, ToolError, ToolRegistry, ToolSpec};
