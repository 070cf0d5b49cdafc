use std::fmt::Write as _;

use crate::extract::{AnswerSet, AnswerSource};
use crate::kb::EffectiveKB;
use crate::rule::{eval_formula, Assignment, Formula, TriBool};

use super::evaluate::{RecommendationResult, Status};

/// Produces the human-readable reasoning attached to a result.
pub trait Explainer: Send + Sync {
    fn explain(&self, result: &RecommendationResult, answers: &AnswerSet, ekb: &EffectiveKB) -> String;
}

/// Deterministic text built from the rules and the factor answers.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateExplainer;

pub fn explain(result: &RecommendationResult, answers: &AnswerSet, ekb: &EffectiveKB) -> String {
    TemplateExplainer.explain(result, answers, ekb)
}

fn value_of(env: &Assignment, atom: &str) -> TriBool {
    env.get(atom).unwrap_or(TriBool::Unknown)
}

/// Atoms whose answer alone decides a FALSE result: making any one of them
/// unknown stops the rule from being false.
fn falsifying_atoms(rule: &Formula, env: &Assignment) -> Vec<String> {
    let atoms = rule.free_variables();
    let critical: Vec<String> = atoms
        .iter()
        .filter(|atom| value_of(env, atom).is_known())
        .filter(|atom| {
            let probe = env.clone().with(atom.as_str(), TriBool::Unknown);
            eval_formula(rule, &probe).map(|v| v != TriBool::False).unwrap_or(false)
        })
        .cloned()
        .collect();
    if critical.is_empty() {
        atoms.into_iter().filter(|a| value_of(env, a).is_known()).collect()
    } else {
        critical
    }
}

fn unknown_atoms(rule: &Formula, env: &Assignment) -> Vec<String> {
    rule.free_variables()
        .into_iter()
        .filter(|a| !value_of(env, a).is_known())
        .collect()
}

fn with_values(atoms: &[String], env: &Assignment) -> String {
    atoms
        .iter()
        .map(|a| format!("{a} = {}", value_of(env, a)))
        .collect::<Vec<_>>()
        .join(", ")
}

impl TemplateExplainer {
    fn write_rule(out: &mut String, label: &str, rule: &Formula, answers: &AnswerSet, ekb: &EffectiveKB) {
        let env = answers.assignment();
        let value = eval_formula(rule, &env).unwrap_or(TriBool::Unknown);
        let _ = writeln!(out, "{label} rule: {rule} => {value}");
        for atom in rule.free_variables() {
            let question = ekb.factor(&atom).map(|f| f.question.as_str()).unwrap_or("(undeclared)");
            match answers.get(&atom) {
                Some(a) => {
                    let by = match a.source {
                        AnswerSource::Extractor => "extractor",
                        AnswerSource::Clinician => "clinician",
                    };
                    let _ = writeln!(out, "  - {atom}: {question} {}. [{by}] {}", a.value, a.explanation);
                }
                None => {
                    let _ = writeln!(out, "  - {atom}: {question} (no answer)");
                }
            }
        }
    }
}

impl Explainer for TemplateExplainer {
    fn explain(&self, result: &RecommendationResult, answers: &AnswerSet, ekb: &EffectiveKB) -> String {
        let mut out = String::new();
        let Some(sourced) = ekb.recommendation(&result.recommendation_id) else {
            let _ = writeln!(out, "{} ({}): {}", result.title, result.recommendation_id, result.status.as_str());
            let _ = write!(out, "source: {}", result.source_kb);
            return out;
        };
        let rec = &sourced.recommendation;
        let env = answers.assignment();
        let _ = writeln!(out, "{} ({}): {}", rec.title, rec.id, result.status.as_str());
        Self::write_rule(&mut out, "Relevance", &rec.relevance_rule, answers, ekb);
        Self::write_rule(&mut out, "Completion", &rec.completion_rule, answers, ekb);

        match result.status {
            Status::NotRelevant => {
                let atoms = falsifying_atoms(&rec.relevance_rule, &env);
                if atoms.is_empty() {
                    let _ = writeln!(out, "Not relevant: the relevance rule is always false.");
                } else {
                    let _ = writeln!(out, "Not relevant: the rule is falsified by {}.", with_values(&atoms, &env));
                }
            }
            Status::Indeterminate => {
                let atoms = unknown_atoms(&rec.relevance_rule, &env);
                let _ = writeln!(out, "Indeterminate: blocked by unknown answers for {}.", atoms.join(", "));
            }
            Status::Gap if result.indeterminate_completion => {
                let atoms = unknown_atoms(&rec.completion_rule, &env);
                let _ = writeln!(
                    out,
                    "Gap: relevant, and completion cannot be confirmed (unknown: {}).",
                    atoms.join(", ")
                );
            }
            Status::Gap => {
                let _ = writeln!(out, "Gap: relevant but not completed.");
            }
            Status::Complete => {
                let _ = writeln!(out, "Complete: relevant and already completed.");
            }
        }
        let _ = write!(out, "source: {}", sourced.source);
        out
    }
}
