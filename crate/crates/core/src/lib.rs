//! Knowledge-base server and rules engine for guideline-driven clinical
//! decision support.
//!
//! Guideline logic lives in versioned, stackable knowledge bases of decision
//! factors and rules ([`kb`]). Answers to the factor questions are extracted
//! from a patient record by a pluggable backend ([`extract`]), the rules are
//! evaluated in three-valued logic ([`rule`]), and a clinician reviews the
//! outcome in a two-step session with an append-only audit log
//! ([`session`]).

pub mod extract;
pub mod kb;
pub mod rule;
pub mod session;

pub use extract::{AnswerSet, FactorAnswer, MockExtractor, PatientRecord, SegmentedRecord, ToolRegistry};
pub use kb::{EffectiveKB, KnowledgeBase, Registry, StackRef, VersionedArtifact};
pub use rule::{Formula, TriBool};
pub use session::{RecommendationResult, ReviewSession, Status};
