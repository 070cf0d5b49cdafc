use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::extract::AnswerSet;
use crate::kb::EffectiveKB;
use crate::rule::{eval_formula, EvalError, TriBool};

use super::explain::Explainer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Gap,
    Indeterminate,
    Complete,
    NotRelevant,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Gap => "GAP",
            Status::Indeterminate => "INDETERMINATE",
            Status::Complete => "COMPLETE",
            Status::NotRelevant => "NOT_RELEVANT",
        }
    }
}

/// Maps (relevance, completion) to a status and the indeterminate-completion
/// flag. A relevant item whose completion is unknown is a flagged gap.
pub fn derive_status(relevance: TriBool, completion: TriBool) -> (Status, bool) {
    match (relevance, completion) {
        (TriBool::False, _) => (Status::NotRelevant, false),
        (TriBool::Unknown, _) => (Status::Indeterminate, false),
        (TriBool::True, TriBool::True) => (Status::Complete, false),
        (TriBool::True, TriBool::False) => (Status::Gap, false),
        (TriBool::True, TriBool::Unknown) => (Status::Gap, true),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationResult {
    pub recommendation_id: String,
    pub title: String,
    pub category: String,
    /// `None` for clinician-added items.
    pub relevance: Option<TriBool>,
    pub completion: Option<TriBool>,
    pub status: Status,
    pub indeterminate_completion: bool,
    pub fired_rule: String,
    pub source_kb: String,
    pub explanation: String,
}

pub const CLINICIAN_SOURCE: &str = "clinician";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvaluationError {
    #[error("no answer for factor `{0}`")]
    MissingAnswer(String),
}

impl From<EvalError> for EvaluationError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnboundVariable(name) => EvaluationError::MissingAnswer(name),
        }
    }
}

pub fn result_order(a: &RecommendationResult, b: &RecommendationResult) -> Ordering {
    (a.status, &a.category, &a.recommendation_id).cmp(&(b.status, &b.category, &b.recommendation_id))
}

/// One result per merged recommendation, sorted by (status, category, id).
/// Explanations are left empty; see [`evaluate_and_explain`].
pub fn evaluate(ekb: &EffectiveKB, answers: &AnswerSet) -> Result<Vec<RecommendationResult>, EvaluationError> {
    let env = answers.assignment();
    let mut results = ekb
        .merged_recommendations
        .values()
        .map(|sourced| {
            let rec = &sourced.recommendation;
            let relevance = eval_formula(&rec.relevance_rule, &env)?;
            let completion = eval_formula(&rec.completion_rule, &env)?;
            let (status, indeterminate_completion) = derive_status(relevance, completion);
            Ok(RecommendationResult {
                recommendation_id: rec.id.clone(),
                title: rec.title.clone(),
                category: rec.category.clone(),
                relevance: Some(relevance),
                completion: Some(completion),
                status,
                indeterminate_completion,
                fired_rule: rec.relevance_rule.to_string(),
                source_kb: sourced.source.clone(),
                explanation: String::new(),
            })
        })
        .collect::<Result<Vec<_>, EvaluationError>>()?;
    results.sort_by(result_order);
    Ok(results)
}

pub fn evaluate_and_explain(
    ekb: &EffectiveKB,
    answers: &AnswerSet,
    explainer: &dyn Explainer,
) -> Result<Vec<RecommendationResult>, EvaluationError> {
    let mut results = evaluate(ekb, answers)?;
    for result in &mut results {
        result.explanation = explainer.explain(result, answers, ekb);
    }
    Ok(results)
}
