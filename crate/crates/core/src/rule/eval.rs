use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::Formula;
use super::tribool::TriBool;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),
}

/// Variable bindings for rule evaluation. Missing names are an error, never
/// an implicit `Unknown`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(BTreeMap<String, TriBool>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, value: TriBool) -> &mut Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn with(mut self, name: impl Into<String>, value: TriBool) -> Self {
        self.bind(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<TriBool> {
        self.0.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Result<TriBool, EvalError> {
        self.get(name)
            .ok_or_else(|| EvalError::UnboundVariable(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, TriBool)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl<K: Into<String>> FromIterator<(K, TriBool)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (K, TriBool)>>(iter: I) -> Self {
        Assignment(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

/// Strong-Kleene evaluation. Both operands are always visited, so an unbound
/// variable is reported regardless of short-circuiting.
pub fn eval_formula(formula: &Formula, env: &Assignment) -> Result<TriBool, EvalError> {
    Ok(match formula {
        Formula::Var(name) => env.lookup(name)?,
        Formula::Const(b) => TriBool::from(*b),
        Formula::Not(inner) => !eval_formula(inner, env)?,
        Formula::And(l, r) => eval_formula(l, env)?.and(eval_formula(r, env)?),
        Formula::Or(l, r) => eval_formula(l, env)?.or(eval_formula(r, env)?),
        Formula::Implies(l, r) => eval_formula(l, env)?.implies(eval_formula(r, env)?),
    })
}
