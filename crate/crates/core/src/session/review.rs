use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::extract::{
    extract_all, AnswerSet, AnswerSource, ExtractError, Extractor, FactorAnswer, PatientRecord, RecordError,
    SegmentedRecord, ToolRegistry,
};
use crate::kb::{resolve_stack, EffectiveKB, Registry, StackError, StackRef};
use crate::rule::TriBool;

use super::evaluate::{evaluate_and_explain, result_order, EvaluationError, RecommendationResult, Status, CLINICIAN_SOURCE};
use super::explain::Explainer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionState {
    #[serde(rename = "STEP1_FACTOR_REVIEW")]
    Step1FactorReview,
    #[serde(rename = "STEP2_WORKUP_REVIEW")]
    Step2WorkupReview,
    Finalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditKind {
    FactorOverride,
    RecEdit,
    RecAdd,
    RecRemove,
    RecMove,
    StepFinalized,
}

impl AuditKind {
    pub fn is_recommendation_change(self) -> bool {
        matches!(
            self,
            AuditKind::RecEdit | AuditKind::RecAdd | AuditKind::RecRemove | AuditKind::RecMove
        )
    }
}

/// One recorded mutation. `before`/`after` hold the complete prior and new
/// value of the subject (null when absent), so replay is a plain fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub revision: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    pub kind: AuditKind,
    pub subject: String,
    pub before: Value,
    pub after: Value,
    pub reason: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session is in {actual:?}, operation requires {expected:?}")]
    WrongState { expected: SessionState, actual: SessionState },
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("new value equals the current value")]
    NoChange,
    #[error("unknown recommendation `{0}`")]
    UnknownRecommendation(String),
    #[error("recommendation id `{0}` already exists")]
    DuplicateId(String),
    #[error("cannot move `{id}` with status {status:?}; only GAP and COMPLETE items move")]
    InvalidMove { id: String, status: Status },
    #[error("invalid adjustment: {0}")]
    InvalidAdjustment(String),
    #[error("stale revision {expected}, session is at {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("replay failed at revision {revision}: {message}")]
    Replay { revision: u64, message: String },
}

/// Who is mutating, when, and which revision they last saw.
#[derive(Debug, Clone)]
pub struct Mutation {
    pub actor: String,
    pub at: DateTime<Utc>,
    pub expected_revision: Option<u64>,
}

impl Mutation {
    pub fn new(actor: impl Into<String>, at: DateTime<Utc>) -> Self {
        Mutation {
            actor: actor.into(),
            at,
            expected_revision: None,
        }
    }

    pub fn now(actor: impl Into<String>) -> Self {
        Self::new(actor, Utc::now())
    }

    pub fn at_revision(mut self, revision: u64) -> Self {
        self.expected_revision = Some(revision);
        self
    }
}

/// State fixed at creation; the starting point for event replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub session_id: String,
    pub patient_id: String,
    pub stack: Vec<String>,
    pub extractor_id: String,
    pub created_at: DateTime<Utc>,
    pub effective_kb: EffectiveKB,
    pub record: SegmentedRecord,
    pub answers: AnswerSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Adjustment {
    Edit {
        id: String,
        #[serde(default)]
        title: Option<String>,
        #[serde(default)]
        category: Option<String>,
        #[serde(default)]
        explanation: Option<String>,
    },
    Add {
        id: String,
        title: String,
        category: String,
        status: Status,
        #[serde(default)]
        explanation: String,
    },
    Remove {
        id: String,
    },
    Move {
        id: String,
    },
}

impl Adjustment {
    pub fn id(&self) -> &str {
        match self {
            Adjustment::Edit { id, .. }
            | Adjustment::Add { id, .. }
            | Adjustment::Remove { id }
            | Adjustment::Move { id } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSession {
    pub header: SessionHeader,
    pub state: SessionState,
    pub answers: AnswerSet,
    pub results: Vec<RecommendationResult>,
    pub audit: Vec<AuditEvent>,
    pub revision: u64,
    pub finalized_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanItem {
    pub id: String,
    pub title: String,
    pub category: String,
    pub status: Status,
    pub explanation: String,
    pub source_kb: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanExport {
    pub patient_id: String,
    pub stack: Vec<String>,
    pub results: Vec<PlanItem>,
    pub finalized_at: Option<DateTime<Utc>>,
}

impl PlanExport {
    pub fn from_results(
        patient_id: &str,
        stack: Vec<String>,
        results: &[RecommendationResult],
        finalized_at: Option<DateTime<Utc>>,
    ) -> Self {
        PlanExport {
            patient_id: patient_id.to_string(),
            stack,
            results: results
                .iter()
                .map(|r| PlanItem {
                    id: r.recommendation_id.clone(),
                    title: r.title.clone(),
                    category: r.category.clone(),
                    status: r.status,
                    explanation: r.explanation.clone(),
                    source_kb: r.source_kb.clone(),
                })
                .collect(),
            finalized_at,
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn state_value(state: SessionState) -> Value {
    serde_json::json!({ "state": state })
}

/// Resolves the stack and extracts every required factor for a new session.
pub fn create_session(
    session_id: impl Into<String>,
    record: PatientRecord,
    registry: &Registry,
    stack: &[StackRef],
    extractor: &dyn Extractor,
    tools: &ToolRegistry,
    at: DateTime<Utc>,
) -> Result<ReviewSession, SessionError> {
    let ekb = resolve_stack(registry, stack)?;
    ReviewSession::create(session_id, record, ekb, extractor, tools, at)
}

impl ReviewSession {
    pub fn create(
        session_id: impl Into<String>,
        record: PatientRecord,
        effective_kb: EffectiveKB,
        extractor: &dyn Extractor,
        tools: &ToolRegistry,
        at: DateTime<Utc>,
    ) -> Result<Self, SessionError> {
        let record = SegmentedRecord::new(record)?;
        let answers = extract_all(&effective_kb, &record, extractor, tools)?;
        Ok(Self::from_header(SessionHeader {
            session_id: session_id.into(),
            patient_id: record.record.patient_id.clone(),
            stack: effective_kb.stack_labels(),
            extractor_id: extractor.id().to_string(),
            created_at: at,
            effective_kb,
            record,
            answers,
        }))
    }

    /// The session as it stood at creation, revision 1.
    pub fn from_header(header: SessionHeader) -> Self {
        ReviewSession {
            answers: header.answers.clone(),
            header,
            state: SessionState::Step1FactorReview,
            results: vec![],
            audit: vec![],
            revision: 1,
            finalized_at: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.header.session_id
    }

    pub fn effective_kb(&self) -> &EffectiveKB {
        &self.header.effective_kb
    }

    fn check(&self, ctx: &Mutation, expected: SessionState) -> Result<(), SessionError> {
        if let Some(rev) = ctx.expected_revision {
            if rev != self.revision {
                return Err(SessionError::Conflict {
                    expected: rev,
                    actual: self.revision,
                });
            }
        }
        if self.state != expected {
            return Err(SessionError::WrongState {
                expected,
                actual: self.state,
            });
        }
        Ok(())
    }

    fn record(
        &mut self,
        ctx: &Mutation,
        kind: AuditKind,
        subject: &str,
        before: Value,
        after: Value,
        reason: &str,
    ) -> Result<&AuditEvent, SessionError> {
        let event = AuditEvent {
            revision: self.revision + 1,
            timestamp: ctx.at,
            actor: ctx.actor.clone(),
            kind,
            subject: subject.to_string(),
            before,
            after,
            reason: reason.to_string(),
        };
        self.apply(event)?;
        Ok(self.audit.last().expect("event just applied"))
    }

    /// Step 1: replaces a factor answer with a clinician answer.
    pub fn override_factor(
        &mut self,
        factor: &str,
        value: TriBool,
        reason: &str,
        ctx: &Mutation,
    ) -> Result<&AuditEvent, SessionError> {
        self.check(ctx, SessionState::Step1FactorReview)?;
        let current = self
            .answers
            .get(factor)
            .ok_or_else(|| SessionError::UnknownFactor(factor.to_string()))?;
        if current.value == value {
            return Err(SessionError::NoChange);
        }
        let updated = FactorAnswer {
            factor_name: factor.to_string(),
            value,
            explanation: reason.to_string(),
            citations: current.citations.clone(),
            source: AnswerSource::Clinician,
            extractor_id: current.extractor_id.clone(),
        };
        let before = to_value(current);
        self.record(ctx, AuditKind::FactorOverride, factor, before, to_value(&updated), reason)
    }

    /// Evaluates every recommendation over the current answers and moves to
    /// step 2.
    pub fn finalize_step1(&mut self, explainer: &dyn Explainer, ctx: &Mutation) -> Result<&AuditEvent, SessionError> {
        self.check(ctx, SessionState::Step1FactorReview)?;
        let results = evaluate_and_explain(&self.header.effective_kb, &self.answers, explainer)?;
        let after = serde_json::json!({
            "state": SessionState::Step2WorkupReview,
            "results": results,
        });
        self.record(
            ctx,
            AuditKind::StepFinalized,
            "step1",
            state_value(SessionState::Step1FactorReview),
            after,
            "",
        )
    }

    /// Step 2: edit, add, remove or move a workup item.
    pub fn adjust_recommendation(
        &mut self,
        adjustment: &Adjustment,
        reason: &str,
        ctx: &Mutation,
    ) -> Result<&AuditEvent, SessionError> {
        self.check(ctx, SessionState::Step2WorkupReview)?;
        let id = adjustment.id();
        let existing = self.results.iter().find(|r| r.recommendation_id == id).cloned();
        let (kind, before, after) = match adjustment {
            Adjustment::Add {
                id,
                title,
                category,
                status,
                explanation,
            } => {
                if existing.is_some() {
                    return Err(SessionError::DuplicateId(id.clone()));
                }
                if id.trim().is_empty() || title.trim().is_empty() {
                    return Err(SessionError::InvalidAdjustment("id and title are required".into()));
                }
                let added = RecommendationResult {
                    recommendation_id: id.clone(),
                    title: title.clone(),
                    category: category.clone(),
                    relevance: None,
                    completion: None,
                    status: *status,
                    indeterminate_completion: false,
                    fired_rule: String::new(),
                    source_kb: CLINICIAN_SOURCE.to_string(),
                    explanation: explanation.clone(),
                };
                (AuditKind::RecAdd, Value::Null, to_value(&added))
            }
            Adjustment::Edit {
                title,
                category,
                explanation,
                ..
            } => {
                let current = existing.ok_or_else(|| SessionError::UnknownRecommendation(id.to_string()))?;
                let mut edited = current.clone();
                if let Some(t) = title {
                    edited.title = t.clone();
                }
                if let Some(c) = category {
                    edited.category = c.clone();
                }
                if let Some(e) = explanation {
                    edited.explanation = e.clone();
                }
                if edited == current {
                    return Err(SessionError::NoChange);
                }
                (AuditKind::RecEdit, to_value(&current), to_value(&edited))
            }
            Adjustment::Remove { .. } => {
                let current = existing.ok_or_else(|| SessionError::UnknownRecommendation(id.to_string()))?;
                (AuditKind::RecRemove, to_value(&current), Value::Null)
            }
            Adjustment::Move { .. } => {
                let current = existing.ok_or_else(|| SessionError::UnknownRecommendation(id.to_string()))?;
                let mut moved = current.clone();
                moved.status = match current.status {
                    Status::Gap => Status::Complete,
                    Status::Complete => Status::Gap,
                    status => {
                        return Err(SessionError::InvalidMove {
                            id: id.to_string(),
                            status,
                        })
                    }
                };
                (AuditKind::RecMove, to_value(&current), to_value(&moved))
            }
        };
        self.record(ctx, kind, id, before, after, reason)
    }

    /// Locks the plan.
    pub fn finalize(&mut self, ctx: &Mutation) -> Result<&AuditEvent, SessionError> {
        self.check(ctx, SessionState::Step2WorkupReview)?;
        self.record(
            ctx,
            AuditKind::StepFinalized,
            "step2",
            state_value(SessionState::Step2WorkupReview),
            state_value(SessionState::Finalized),
            "",
        )
    }

    pub fn export(&self) -> PlanExport {
        PlanExport::from_results(
            &self.header.patient_id,
            self.header.stack.clone(),
            &self.results,
            self.finalized_at,
        )
    }

    /// Applies a recorded event. Used for both live mutations and replay.
    pub fn apply(&mut self, event: AuditEvent) -> Result<(), SessionError> {
        let fail = |message: String| SessionError::Replay {
            revision: event.revision,
            message,
        };
        if event.revision != self.revision + 1 {
            return Err(fail(format!("expected revision {}", self.revision + 1)));
        }
        if event.before == event.after {
            return Err(fail("event does not change anything".into()));
        }
        let decode = |v: &Value| serde_json::from_value::<RecommendationResult>(v.clone());
        match event.kind {
            AuditKind::FactorOverride => {
                if self.state != SessionState::Step1FactorReview {
                    return Err(fail("factor override outside step 1".into()));
                }
                let answer: FactorAnswer =
                    serde_json::from_value(event.after.clone()).map_err(|e| fail(e.to_string()))?;
                if !self.answers.answers.contains_key(&event.subject) || answer.factor_name != event.subject {
                    return Err(fail(format!("unknown factor `{}`", event.subject)));
                }
                self.answers.answers.insert(event.subject.clone(), answer);
            }
            kind if kind.is_recommendation_change() => {
                if self.state != SessionState::Step2WorkupReview {
                    return Err(fail("recommendation change outside step 2".into()));
                }
                self.results.retain(|r| r.recommendation_id != event.subject);
                if !event.after.is_null() {
                    let result = decode(&event.after).map_err(|e| fail(e.to_string()))?;
                    self.results.push(result);
                    self.results.sort_by(result_order);
                }
            }
            _ => {
                let target: SessionState = event
                    .after
                    .get("state")
                    .cloned()
                    .and_then(|s| serde_json::from_value(s).ok())
                    .ok_or_else(|| fail("missing target state".into()))?;
                match (self.state, target) {
                    (SessionState::Step1FactorReview, SessionState::Step2WorkupReview) => {
                        let results = event
                            .after
                            .get("results")
                            .cloned()
                            .ok_or_else(|| fail("missing results".into()))?;
                        self.results = serde_json::from_value(results).map_err(|e| fail(e.to_string()))?;
                    }
                    (SessionState::Step2WorkupReview, SessionState::Finalized) => {
                        self.finalized_at = Some(event.timestamp);
                    }
                    (from, to) => return Err(fail(format!("illegal transition {from:?} -> {to:?}"))),
                }
                self.state = target;
            }
        }
        self.revision = event.revision;
        self.audit.push(event);
        Ok(())
    }

    /// Rebuilds a session from its header and event log.
    pub fn replay(header: SessionHeader, events: impl IntoIterator<Item = AuditEvent>) -> Result<Self, SessionError> {
        let mut session = Self::from_header(header);
        for event in events {
            session.apply(event)?;
        }
        Ok(session)
    }
}
