//! Knowledge-base documents, linting, snapshots, the versioned registry and
//! priority stacking.

mod lint;
mod model;
mod registry;
mod snapshot;
mod stack;
mod version;

pub use lint::{
    lint_kb, rule_coverage, LintCode, LintFinding, RuleCoverage, Severity, DEFAULT_EXHAUSTIVE_LIMIT,
    SAMPLE_COUNT,
};
pub use model::{
    is_namespace, is_version, load_kb, DecisionFactor, KbError, KnowledgeBase, Recommendation, RuleKind,
};
pub use registry::{artifact_file_name, IndexEntry, Registry, RegistryError, INDEX_FILE, LATEST};
pub use snapshot::{
    canonical_bytes, content_hash, snapshot, snapshot_at, to_canonical_json, write_canonical_json,
    IntegrityError, SnapshotError, VersionedArtifact,
};
pub use stack::{
    resolve_stack, stack_artifacts, ArtifactRef, EffectiveKB, Override, SourcedFactor, SourcedRecommendation,
    StackError, StackRef,
};
pub use version::compare_versions;
