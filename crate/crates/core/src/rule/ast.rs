use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A rule over decision-factor variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Var(String),
    Const(bool),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn var(name: impl Into<String>) -> Self {
        Formula::Var(name.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Formula) -> Self {
        Formula::Not(Box::new(inner))
    }

    pub fn and(left: Formula, right: Formula) -> Self {
        Formula::And(Box::new(left), Box::new(right))
    }

    pub fn or(left: Formula, right: Formula) -> Self {
        Formula::Or(Box::new(left), Box::new(right))
    }

    pub fn implies(left: Formula, right: Formula) -> Self {
        Formula::Implies(Box::new(left), Box::new(right))
    }

    /// Variables referenced anywhere in the tree, in lexicographic order.
    pub fn free_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Var(name) => {
                out.insert(name.clone());
            }
            Formula::Const(_) => {}
            Formula::Not(inner) => inner.collect_vars(out),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// Height of the tree; a bare atom has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Var(_) | Formula::Const(_) => 1,
            Formula::Not(inner) => 1 + inner.depth(),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                1 + l.depth().max(r.depth())
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Not(_) => 4,
            Formula::Var(_) | Formula::Const(_) => 5,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let parens = self.precedence() < min_prec;
        if parens {
            f.write_str("(")?;
        }
        match self {
            Formula::Var(name) => f.write_str(name)?,
            Formula::Const(true) => f.write_str("TRUE")?,
            Formula::Const(false) => f.write_str("FALSE")?,
            Formula::Not(inner) => {
                f.write_str("NOT ")?;
                inner.write_at(f, 4)?;
            }
            // left-associative: a right operand of equal precedence needs parens
            Formula::And(l, r) => {
                l.write_at(f, 3)?;
                f.write_str(" AND ")?;
                r.write_at(f, 4)?;
            }
            Formula::Or(l, r) => {
                l.write_at(f, 2)?;
                f.write_str(" OR ")?;
                r.write_at(f, 3)?;
            }
            // right-associative
            Formula::Implies(l, r) => {
                l.write_at(f, 2)?;
                f.write_str(" IMPLIES ")?;
                r.write_at(f, 1)?;
            }
        }
        if parens {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Canonical text: uppercase keywords, single spaces, minimal parentheses.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

pub fn format_formula(formula: &Formula) -> String {
    formula.to_string()
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        super::parse_formula(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_parentheses() {
        let f = Formula::and(Formula::var("a"), Formula::not(Formula::var("b")));
        assert_eq!(f.to_string(), "a AND NOT b");

        let f = Formula::implies(
            Formula::var("a"),
            Formula::or(Formula::var("b"), Formula::var("c")),
        );
        assert_eq!(f.to_string(), "a IMPLIES b OR c");

        let f = Formula::or(
            Formula::and(Formula::var("a"), Formula::var("b")),
            Formula::var("c"),
        );
        assert_eq!(f.to_string(), "a AND b OR c");
    }

    #[test]
    fn parentheses_where_structure_needs_them() {
        let f = Formula::and(
            Formula::var("a"),
            Formula::or(Formula::var("b"), Formula::var("c")),
        );
        assert_eq!(f.to_string(), "a AND (b OR c)");

        let f = Formula::and(
            Formula::var("a"),
            Formula::and(Formula::var("b"), Formula::var("c")),
        );
        assert_eq!(f.to_string(), "a AND (b AND c)");

        let f = Formula::implies(
            Formula::implies(Formula::var("a"), Formula::var("b")),
            Formula::var("c"),
        );
        assert_eq!(f.to_string(), "(a IMPLIES b) IMPLIES c");

        let f = Formula::not(Formula::and(Formula::var("a"), Formula::Const(true)));
        assert_eq!(f.to_string(), "NOT (a AND TRUE)");
    }

    #[test]
    fn free_variables_are_sorted_and_deduplicated() {
        let f = Formula::or(
            Formula::var("b"),
            Formula::and(Formula::var("a"), Formula::var("b")),
        );
        let vars: Vec<_> = f.free_variables().into_iter().collect();
        assert_eq!(vars, ["a", "b"]);
        assert!(Formula::Const(true).free_variables().is_empty());
    }
}
