use std::fmt;
use std::ops::Not;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A three-valued truth value: the answer to a decision-factor question.
///
/// Connectives follow strong Kleene semantics. `Unknown` propagates unless
/// the other operand dominates (`False` for AND, `True` for OR).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriBool {
    #[serde(rename = "yes", alias = "true")]
    True,
    #[serde(rename = "no", alias = "false")]
    False,
    #[serde(rename = "unknown")]
    Unknown,
}

impl TriBool {
    pub const ALL: [TriBool; 3] = [TriBool::True, TriBool::False, TriBool::Unknown];

    pub fn and(self, other: TriBool) -> TriBool {
        match (self, other) {
            (TriBool::False, _) | (_, TriBool::False) => TriBool::False,
            (TriBool::Unknown, _) | (_, TriBool::Unknown) => TriBool::Unknown,
            _ => TriBool::True,
        }
    }

    pub fn or(self, other: TriBool) -> TriBool {
        match (self, other) {
            (TriBool::True, _) | (_, TriBool::True) => TriBool::True,
            (TriBool::Unknown, _) | (_, TriBool::Unknown) => TriBool::Unknown,
            _ => TriBool::False,
        }
    }

    pub fn implies(self, other: TriBool) -> TriBool {
        (!self).or(other)
    }

    pub fn is_known(self) -> bool {
        self != TriBool::Unknown
    }

    /// The answer word used in records, configs and explanations.
    pub fn as_answer(self) -> &'static str {
        match self {
            TriBool::True => "yes",
            TriBool::False => "no",
            TriBool::Unknown => "unknown",
        }
    }
}

impl Not for TriBool {
    type Output = TriBool;

    fn not(self) -> TriBool {
        match self {
            TriBool::True => TriBool::False,
            TriBool::False => TriBool::True,
            TriBool::Unknown => TriBool::Unknown,
        }
    }
}

impl From<bool> for TriBool {
    fn from(value: bool) -> Self {
        if value {
            TriBool::True
        } else {
            TriBool::False
        }
    }
}

impl fmt::Display for TriBool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_answer())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a yes/no/unknown value: {0:?}")]
pub struct ParseTriBoolError(pub String);

impl FromStr for TriBool {
    type Err = ParseTriBoolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "true" | "y" => Ok(TriBool::True),
            "no" | "false" | "n" => Ok(TriBool::False),
            "unknown" | "u" => Ok(TriBool::Unknown),
            _ => Err(ParseTriBoolError(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negation_keeps_unknown() {
        assert_eq!(!TriBool::Unknown, TriBool::Unknown);
        assert_eq!(!TriBool::True, TriBool::False);
    }

    #[test]
    fn dominating_operands() {
        assert_eq!(TriBool::Unknown.and(TriBool::False), TriBool::False);
        assert_eq!(TriBool::Unknown.or(TriBool::True), TriBool::True);
        assert_eq!(TriBool::False.implies(TriBool::Unknown), TriBool::True);
        assert_eq!(TriBool::Unknown.and(TriBool::True), TriBool::Unknown);
    }

    #[test]
    fn serde_uses_answer_words() {
        assert_eq!(serde_json::to_string(&TriBool::True).unwrap(), "\"yes\"");
        let v: TriBool = serde_json::from_str("\"false\"").unwrap();
        assert_eq!(v, TriBool::False);
        assert_eq!("Unknown".parse::<TriBool>().unwrap(), TriBool::Unknown);
        assert!("maybe".parse::<TriBool>().is_err());
    }
}
