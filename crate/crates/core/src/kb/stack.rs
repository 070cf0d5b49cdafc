use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::lint::{LintCode, LintFinding, Severity};
use super::model::{is_namespace, DecisionFactor, Recommendation};
use super::registry::{Registry, RegistryError, LATEST};
use super::snapshot::VersionedArtifact;

#[derive(Debug, thiserror::Error)]
pub enum StackError {
    #[error("knowledge base stack is empty")]
    EmptyStack,
    #[error(transparent)]
    NotFound(#[from] RegistryError),
    #[error("invalid stack reference {0:?}, expected namespace@version")]
    InvalidRef(String),
}

/// `namespace@version` where version may be `latest`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StackRef {
    pub namespace: String,
    pub version: String,
}

impl StackRef {
    pub fn new(namespace: impl Into<String>, version: impl Into<String>) -> Self {
        StackRef {
            namespace: namespace.into(),
            version: version.into(),
        }
    }

    pub fn latest(namespace: impl Into<String>) -> Self {
        Self::new(namespace, LATEST)
    }
}

impl FromStr for StackRef {
    type Err = StackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (namespace, version) = match s.split_once('@') {
            Some((ns, v)) => (ns, v),
            None => (s, LATEST),
        };
        if !is_namespace(namespace) || version.is_empty() || version.contains('@') {
            return Err(StackError::InvalidRef(s.to_string()));
        }
        Ok(StackRef::new(namespace, version))
    }
}

impl fmt::Display for StackRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.namespace, self.version)
    }
}

impl Serialize for StackRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StackRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub namespace: String,
    pub version: String,
    pub content_hash: String,
}

impl ArtifactRef {
    pub fn label(&self) -> String {
        format!("{}@{}", self.namespace, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcedFactor {
    pub factor: DecisionFactor,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcedRecommendation {
    pub recommendation: Recommendation,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Override {
    pub recommendation_id: String,
    pub losing: String,
    pub winning: String,
}

/// The merged view of a priority-ordered stack of knowledge bases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveKB {
    /// Lowest to highest priority.
    pub stack: Vec<ArtifactRef>,
    pub merged_factors: BTreeMap<String, SourcedFactor>,
    pub merged_recommendations: BTreeMap<String, SourcedRecommendation>,
    pub overrides: Vec<Override>,
    pub warnings: Vec<LintFinding>,
}

impl EffectiveKB {
    pub fn stack_labels(&self) -> Vec<String> {
        self.stack.iter().map(ArtifactRef::label).collect()
    }

    pub fn factor(&self, name: &str) -> Option<&DecisionFactor> {
        self.merged_factors.get(name).map(|f| &f.factor)
    }

    pub fn recommendation(&self, id: &str) -> Option<&SourcedRecommendation> {
        self.merged_recommendations.get(id)
    }

    /// Factors referenced by at least one merged rule.
    pub fn required_factors(&self) -> BTreeSet<String> {
        self.merged_recommendations
            .values()
            .flat_map(|r| r.recommendation.atoms())
            .collect()
    }
}

/// Merges artifacts given lowest to highest priority.
///
/// Factors merge by name and recommendations by id; on a collision the
/// higher-priority definition replaces the whole entry. Each replaced
/// recommendation is recorded in `overrides`. `OVERRIDE_SHADOW` warnings are
/// raised when a colliding factor changes its question text, and when an
/// overriding recommendation's rules use a factor whose question differs
/// between the winning and losing knowledge bases.
pub fn stack_artifacts(artifacts: &[Arc<VersionedArtifact>]) -> Result<EffectiveKB, StackError> {
    if artifacts.is_empty() {
        return Err(StackError::EmptyStack);
    }
    let mut merged_factors: BTreeMap<String, SourcedFactor> = BTreeMap::new();
    let mut merged_recommendations: BTreeMap<String, SourcedRecommendation> = BTreeMap::new();
    let mut overrides = Vec::new();
    let mut warnings = Vec::new();
    let by_label: BTreeMap<String, &VersionedArtifact> =
        artifacts.iter().map(|a| (a.label(), a.as_ref())).collect();

    for artifact in artifacts {
        let label = artifact.label();
        let kb = artifact.kb();
        for factor in &kb.factors {
            let entry = SourcedFactor {
                factor: factor.clone(),
                source: label.clone(),
            };
            if let Some(previous) = merged_factors.insert(factor.name.clone(), entry) {
                if previous.factor.question != factor.question {
                    warnings.push(LintFinding::new(
                        Severity::Warning,
                        LintCode::OverrideShadow,
                        factor.name.clone(),
                        format!(
                            "question for `{}` from {} ({:?}) is shadowed by {} ({:?})",
                            factor.name, previous.source, previous.factor.question, label, factor.question
                        ),
                    ));
                }
            }
        }
        for rec in &kb.recommendations {
            let entry = SourcedRecommendation {
                recommendation: rec.clone(),
                source: label.clone(),
            };
            if let Some(previous) = merged_recommendations.insert(rec.id.clone(), entry) {
                let losing_kb = by_label[&previous.source].kb();
                for atom in rec.atoms() {
                    let won = kb.factor(&atom).map(|f| &f.question);
                    let lost = losing_kb.factor(&atom).map(|f| &f.question);
                    if let (Some(won), Some(lost)) = (won, lost) {
                        if won != lost {
                            warnings.push(LintFinding::new(
                                Severity::Warning,
                                LintCode::OverrideShadow,
                                rec.id.clone(),
                                format!(
                                    "override of `{}` by {} uses factor `{atom}` whose question differs from {}",
                                    rec.id, label, previous.source
                                ),
                            ));
                        }
                    }
                }
                overrides.push(Override {
                    recommendation_id: rec.id.clone(),
                    losing: previous.source,
                    winning: label.clone(),
                });
            }
        }
    }
    warnings.sort();
    warnings.dedup();

    Ok(EffectiveKB {
        stack: artifacts
            .iter()
            .map(|a| ArtifactRef {
                namespace: a.namespace().to_string(),
                version: a.version().to_string(),
                content_hash: a.content_hash().to_string(),
            })
            .collect(),
        merged_factors,
        merged_recommendations,
        overrides,
        warnings,
    })
}

/// Resolves each reference in the registry, then merges them.
pub fn resolve_stack(registry: &Registry, refs: &[StackRef]) -> Result<EffectiveKB, StackError> {
    if refs.is_empty() {
        return Err(StackError::EmptyStack);
    }
    let artifacts = refs
        .iter()
        .map(|r| registry.resolve(&r.namespace, &r.version))
        .collect::<Result<Vec<_>, _>>()?;
    stack_artifacts(&artifacts)
}
