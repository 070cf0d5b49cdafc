use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::lint::{lint_kb, LintFinding, DEFAULT_EXHAUSTIVE_LIMIT};
use super::model::KnowledgeBase;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("snapshot blocked by {} lint error(s)", .0.len())]
    LintBlocked(Vec<LintFinding>),
}

#[derive(Debug, thiserror::Error)]
#[error("artifact {label}: stored hash {stored} does not match content hash {computed}")]
pub struct IntegrityError {
    pub label: String,
    pub stored: String,
    pub computed: String,
}

/// Writes JSON with object keys sorted and no insignificant whitespace.
pub fn write_canonical_json(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.cmp(b.0));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical_json(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical_json(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("serializable value");
    let mut out = String::new();
    write_canonical_json(&value, &mut out);
    out
}

/// Canonical bytes of a KB: sorted keys and arrays, canonical rule text.
pub fn canonical_bytes(kb: &KnowledgeBase) -> Vec<u8> {
    to_canonical_json(&kb.canonical()).into_bytes()
}

/// Lowercase hex SHA-256 of [`canonical_bytes`].
pub fn content_hash(kb: &KnowledgeBase) -> String {
    hex::encode(Sha256::digest(canonical_bytes(kb)))
}

/// An immutable, content-hashed snapshot of a knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawArtifact")]
pub struct VersionedArtifact {
    kb: KnowledgeBase,
    content_hash: String,
    created_at: DateTime<Utc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArtifact {
    kb: KnowledgeBase,
    content_hash: String,
    created_at: DateTime<Utc>,
}

impl TryFrom<RawArtifact> for VersionedArtifact {
    type Error = IntegrityError;

    fn try_from(raw: RawArtifact) -> Result<Self, Self::Error> {
        let computed = content_hash(&raw.kb);
        if computed != raw.content_hash {
            return Err(IntegrityError {
                label: raw.kb.label(),
                stored: raw.content_hash,
                computed,
            });
        }
        Ok(VersionedArtifact {
            kb: raw.kb.canonical(),
            content_hash: raw.content_hash,
            created_at: raw.created_at,
        })
    }
}

impl VersionedArtifact {
    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn namespace(&self) -> &str {
        &self.kb.namespace
    }

    pub fn version(&self) -> &str {
        &self.kb.version
    }

    pub fn label(&self) -> String {
        self.kb.label()
    }

    pub fn verify(&self) -> Result<(), IntegrityError> {
        let computed = content_hash(&self.kb);
        if computed == self.content_hash {
            Ok(())
        } else {
            Err(IntegrityError {
                label: self.label(),
                stored: self.content_hash.clone(),
                computed,
            })
        }
    }

    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("serializable artifact");
        // second precision keeps the on-disk form stable
        value["created_at"] = Value::String(self.created_at.to_rfc3339_opts(SecondsFormat::Secs, true));
        let mut out = String::new();
        write_canonical_json(&value, &mut out);
        out
    }
}

/// Snapshots a KB whose lint run has no errors.
pub fn snapshot(kb: &KnowledgeBase) -> Result<VersionedArtifact, SnapshotError> {
    snapshot_at(kb, Utc::now())
}

pub fn snapshot_at(kb: &KnowledgeBase, created_at: DateTime<Utc>) -> Result<VersionedArtifact, SnapshotError> {
    let errors: Vec<_> = lint_kb(kb, DEFAULT_EXHAUSTIVE_LIMIT)
        .into_iter()
        .filter(LintFinding::is_error)
        .collect();
    if !errors.is_empty() {
        return Err(SnapshotError::LintBlocked(errors));
    }
    let kb = kb.canonical();
    let content_hash = content_hash(&kb);
    let created_at = DateTime::from_timestamp(created_at.timestamp(), 0).unwrap_or(created_at);
    Ok(VersionedArtifact {
        kb,
        content_hash,
        created_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::load_kb;

    const A: &str = r#"{"namespace": "nccn.colon", "version": "2024.3",
        "factors": [{"name": "a", "question": "A?"}, {"name": "b", "question": "B?"}],
        "recommendations": [{"id": "r", "title": "R", "category": "lab",
            "relevance_rule": "a AND b", "completion_rule": "b"}]}"#;

    // same content, different key/array order and rule spacing
    const A_REORDERED: &str = r#"{"recommendations": [{"completion_rule": "b", "category": "lab",
            "title": "R", "relevance_rule": "(a)   and b", "id": "r"}],
        "factors": [{"question": "B?", "name": "b"}, {"name": "a", "question": "A?"}],
        "version": "2024.3", "namespace": "nccn.colon"}"#;

    #[test]
    fn hash_ignores_field_order() {
        let h1 = snapshot(&load_kb(A.as_bytes()).unwrap()).unwrap();
        let h2 = snapshot(&load_kb(A_REORDERED.as_bytes()).unwrap()).unwrap();
        assert_eq!(h1.content_hash(), h2.content_hash());
        assert_eq!(h1.content_hash().len(), 64);
    }

    #[test]
    fn hash_tracks_rule_changes() {
        let changed = A.replace("a AND b", "a OR b");
        let h1 = snapshot(&load_kb(A.as_bytes()).unwrap()).unwrap();
        let h2 = snapshot(&load_kb(changed.as_bytes()).unwrap()).unwrap();
        assert_ne!(h1.content_hash(), h2.content_hash());
    }

    #[test]
    fn lint_errors_block_snapshot() {
        let bad = A.replace("a AND b", "a AND NOT a");
        match snapshot(&load_kb(bad.as_bytes()).unwrap()) {
            Err(SnapshotError::LintBlocked(findings)) => assert_eq!(findings.len(), 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn artifact_json_round_trip_verifies_hash() {
        let artifact = snapshot(&load_kb(A.as_bytes()).unwrap()).unwrap();
        let json = artifact.to_json();
        let back: VersionedArtifact = serde_json::from_str(&json).unwrap();
        assert_eq!(back, artifact);
        assert_eq!(back.to_json(), json);

        let tampered = json.replace("a AND b", "a OR b");
        let err = serde_json::from_str::<VersionedArtifact>(&tampered).unwrap_err();
        assert!(err.to_string().contains("does not match"));
    }

    #[test]
    fn known_canonical_form() {
        let kb = load_kb(A_REORDERED.as_bytes()).unwrap();
        assert_eq!(
            String::from_utf8(canonical_bytes(&kb)).unwrap(),
            r#"{"factors":[{"name":"a","question":"A?"},{"name":"b","question":"B?"}],"namespace":"nccn.colon","recommendations":[{"category":"lab","completion_rule":"b","id":"r","relevance_rule":"a AND b","title":"R"}],"version":"2024.3"}"#
        );
    }
}
