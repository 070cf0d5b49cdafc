use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rule::{is_identifier, parse_formula, Formula, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Relevance,
    Completion,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleKind::Relevance => f.write_str("relevance_rule"),
            RuleKind::Completion => f.write_str("completion_rule"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("malformed knowledge base document: {0}")]
    Schema(String),
    #[error("{recommendation}.{rule}: {source}")]
    RuleSyntax {
        recommendation: String,
        rule: RuleKind,
        #[source]
        source: ParseError,
    },
    #[error("{recommendation}: rule references undeclared factor `{atom}`")]
    UndefinedAtom { recommendation: String, atom: String },
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionFactor {
    pub name: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recommendation {
    pub id: String,
    pub title: String,
    pub category: String,
    pub relevance_rule: Formula,
    pub completion_rule: Formula,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guideline_note: Option<String>,
}

impl Recommendation {
    pub fn rule(&self, kind: RuleKind) -> &Formula {
        match kind {
            RuleKind::Relevance => &self.relevance_rule,
            RuleKind::Completion => &self.completion_rule,
        }
    }

    pub fn rules(&self) -> [(RuleKind, &Formula); 2] {
        [
            (RuleKind::Relevance, &self.relevance_rule),
            (RuleKind::Completion, &self.completion_rule),
        ]
    }

    /// Factors referenced by either rule.
    pub fn atoms(&self) -> BTreeSet<String> {
        let mut atoms = self.relevance_rule.free_variables();
        atoms.extend(self.completion_rule.free_variables());
        atoms
    }
}

/// A namespaced, versioned collection of decision factors and
/// recommendations.
///
/// [`KnowledgeBase::from_json`] only checks the document shape and rule
/// syntax, which is what the linter needs. [`load_kb`] additionally rejects
/// duplicate names and undeclared atoms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeBase {
    pub namespace: String,
    pub version: String,
    pub factors: Vec<DecisionFactor>,
    pub recommendations: Vec<Recommendation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecommendation {
    id: String,
    title: String,
    category: String,
    relevance_rule: String,
    completion_rule: String,
    #[serde(default)]
    guideline_note: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    namespace: String,
    version: String,
    factors: Vec<DecisionFactor>,
    recommendations: Vec<RawRecommendation>,
}

pub fn is_namespace(ns: &str) -> bool {
    !ns.is_empty()
        && ns.split('.').all(|seg| {
            !seg.is_empty()
                && seg
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
        })
}

pub fn is_version(version: &str) -> bool {
    !version.is_empty()
        && version != "latest"
        && version
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'-' | b'_' | b'+'))
}

impl KnowledgeBase {
    /// Parses a KB document, checking shape and rule syntax only.
    pub fn from_json(bytes: &[u8]) -> Result<Self, KbError> {
        let raw: RawDocument =
            serde_json::from_slice(bytes).map_err(|e| KbError::Schema(e.to_string()))?;

        if !is_namespace(&raw.namespace) {
            return Err(KbError::Schema(format!("invalid namespace {:?}", raw.namespace)));
        }
        if !is_version(&raw.version) {
            return Err(KbError::Schema(format!("invalid version {:?}", raw.version)));
        }
        for factor in &raw.factors {
            if !is_identifier(&factor.name) {
                return Err(KbError::Schema(format!("invalid factor name {:?}", factor.name)));
            }
            if factor.question.trim().is_empty() {
                return Err(KbError::Schema(format!("factor `{}` has an empty question", factor.name)));
            }
        }

        let mut recommendations = Vec::with_capacity(raw.recommendations.len());
        for rec in raw.recommendations {
            if !is_identifier(&rec.id) {
                return Err(KbError::Schema(format!("invalid recommendation id {:?}", rec.id)));
            }
            let parse = |kind: RuleKind, text: &str| {
                parse_formula(text).map_err(|source| KbError::RuleSyntax {
                    recommendation: rec.id.clone(),
                    rule: kind,
                    source,
                })
            };
            let relevance_rule = parse(RuleKind::Relevance, &rec.relevance_rule)?;
            let completion_rule = parse(RuleKind::Completion, &rec.completion_rule)?;
            recommendations.push(Recommendation {
                id: rec.id,
                title: rec.title,
                category: rec.category,
                relevance_rule,
                completion_rule,
                guideline_note: rec.guideline_note,
            });
        }

        Ok(KnowledgeBase {
            namespace: raw.namespace,
            version: raw.version,
            factors: raw.factors,
            recommendations,
        })
    }

    pub fn label(&self) -> String {
        format!("{}@{}", self.namespace, self.version)
    }

    pub fn factor(&self, name: &str) -> Option<&DecisionFactor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn recommendation(&self, id: &str) -> Option<&Recommendation> {
        self.recommendations.iter().find(|r| r.id == id)
    }

    /// Duplicate factor names, then duplicate recommendation ids, each sorted.
    pub(crate) fn duplicates(&self) -> Vec<(&'static str, String)> {
        fn dups<'a>(names: impl Iterator<Item = &'a str>) -> BTreeSet<String> {
            let mut seen = BTreeSet::new();
            let mut dup = BTreeSet::new();
            for name in names {
                if !seen.insert(name) {
                    dup.insert(name.to_string());
                }
            }
            dup
        }
        let mut out: Vec<_> = dups(self.factors.iter().map(|f| f.name.as_str()))
            .into_iter()
            .map(|n| ("factor", n))
            .collect();
        out.extend(
            dups(self.recommendations.iter().map(|r| r.id.as_str()))
                .into_iter()
                .map(|n| ("recommendation", n)),
        );
        out
    }

    /// `(recommendation id, rule kind, atom)` for every atom without a
    /// declared factor.
    pub(crate) fn undefined_atoms(&self) -> Vec<(String, RuleKind, String)> {
        let declared: BTreeSet<&str> = self.factors.iter().map(|f| f.name.as_str()).collect();
        let mut out = Vec::new();
        for rec in &self.recommendations {
            for (kind, rule) in rec.rules() {
                for atom in rule.free_variables() {
                    if !declared.contains(atom.as_str()) {
                        out.push((rec.id.clone(), kind, atom));
                    }
                }
            }
        }
        out
    }

    /// Checks name uniqueness and that every rule atom is a declared factor.
    pub fn validate(&self) -> Result<(), KbError> {
        if let Some((kind, name)) = self.duplicates().into_iter().next() {
            return Err(KbError::DuplicateName { kind, name });
        }
        if let Some((recommendation, _, atom)) = self.undefined_atoms().into_iter().next() {
            return Err(KbError::UndefinedAtom { recommendation, atom });
        }
        Ok(())
    }

    /// Copy with factors sorted by name and recommendations by id.
    pub fn canonical(&self) -> KnowledgeBase {
        let mut kb = self.clone();
        kb.factors.sort_by(|a, b| a.name.cmp(&b.name));
        kb.recommendations.sort_by(|a, b| a.id.cmp(&b.id));
        kb
    }
}

/// Parses and fully validates a KB document.
pub fn load_kb(bytes: &[u8]) -> Result<KnowledgeBase, KbError> {
    let kb = KnowledgeBase::from_json(bytes)?;
    kb.validate()?;
    Ok(kb)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BREAST: &str = r#"{
        "namespace": "nccn.breast",
        "version": "2024.3",
        "factors": [{"name": "cn_positive", "question": "Are clinical lymph nodes positive?"}],
        "recommendations": [{
            "id": "pet_ct", "title": "PET-CT", "category": "imaging",
            "relevance_rule": "cn_positive", "completion_rule": "cn_positive"
        }]
    }"#;

    #[test]
    fn loads_valid_document() {
        let kb = load_kb(BREAST.as_bytes()).unwrap();
        assert_eq!(kb.factors.len(), 1);
        assert_eq!(kb.recommendations.len(), 1);
        assert_eq!(kb.label(), "nccn.breast@2024.3");
    }

    #[test]
    fn undeclared_atom() {
        let doc = BREAST.replace("\"relevance_rule\": \"cn_positive\"", "\"relevance_rule\": \"stage_iv\"");
        match load_kb(doc.as_bytes()) {
            Err(KbError::UndefinedAtom { recommendation, atom }) => {
                assert_eq!(recommendation, "pet_ct");
                assert_eq!(atom, "stage_iv");
            }
            other => panic!("{other:?}"),
        }
        // the lenient parse still accepts it
        assert!(KnowledgeBase::from_json(doc.as_bytes()).is_ok());
    }

    #[test]
    fn duplicate_factor() {
        let doc = r#"{"namespace": "x", "version": "1", "factors": [
            {"name": "pregnant", "question": "Is the patient pregnant?"},
            {"name": "pregnant", "question": "Pregnant?"}], "recommendations": []}"#;
        assert!(matches!(
            load_kb(doc.as_bytes()),
            Err(KbError::DuplicateName { kind: "factor", .. })
        ));
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(load_kb(b"{"), Err(KbError::Schema(_))));
        assert!(matches!(
            load_kb(br#"{"namespace": "x", "version": "1", "factors": [], "recommendations": [], "extra": 1}"#),
            Err(KbError::Schema(_))
        ));
        assert!(matches!(
            load_kb(br#"{"namespace": "Bad NS", "version": "1", "factors": [], "recommendations": []}"#),
            Err(KbError::Schema(_))
        ));
        assert!(matches!(
            load_kb(br#"{"namespace": "x", "version": "latest", "factors": [], "recommendations": []}"#),
            Err(KbError::Schema(_))
        ));
        let doc = BREAST.replace("\"completion_rule\": \"cn_positive\"", "\"completion_rule\": \"AND\"");
        assert!(matches!(
            load_kb(doc.as_bytes()),
            Err(KbError::RuleSyntax { rule: RuleKind::Completion, .. })
        ));
    }
}
