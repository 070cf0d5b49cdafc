//! Recommendation evaluation, explanations and the two-step review session.

mod evaluate;
mod explain;
mod review;
mod stats;
mod store;

pub use evaluate::{
    derive_status, evaluate, evaluate_and_explain, result_order, EvaluationError, RecommendationResult, Status,
    CLINICIAN_SOURCE,
};
pub use explain::{explain, Explainer, TemplateExplainer};
pub use review::{
    create_session, Adjustment, AuditEvent, AuditKind, Mutation, PlanExport, PlanItem, ReviewSession,
    SessionError, SessionHeader, SessionState,
};
pub use stats::{compute_stats, percentage_hundredths, session_counts, AdjustmentStats, Stage, StatsError};
pub use store::{load_session_dir, load_session_log, write_session_log, LogLine, SessionStore, StoreError};
