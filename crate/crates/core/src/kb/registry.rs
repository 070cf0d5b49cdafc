use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::snapshot::VersionedArtifact;
use super::version::compare_versions;

pub const INDEX_FILE: &str = "index.json";
pub const LATEST: &str = "latest";

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("{namespace}@{version} is already registered")]
    VersionConflict { namespace: String, version: String },
    #[error("{namespace}@{version} not found")]
    NotFound { namespace: String, version: String },
    #[error("registry io error at {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt registry entry {}: {message}", .path.display())]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub namespace: String,
    pub version: String,
    pub content_hash: String,
    pub created_at: DateTime<Utc>,
    pub file: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    artifacts: Vec<IndexEntry>,
}

/// Append-only store of versioned artifacts keyed by namespace and version.
///
/// Reads share a lock; `register` holds the write lock for the whole
/// operation, including the file writes when the registry is backed by a
/// directory.
#[derive(Debug, Default)]
pub struct Registry {
    dir: Option<PathBuf>,
    namespaces: RwLock<BTreeMap<String, Vec<Arc<VersionedArtifact>>>>,
}

pub fn artifact_file_name(namespace: &str, version: &str) -> String {
    format!("{namespace}@{version}.json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Registry {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a directory-backed registry and loads every
    /// indexed artifact, verifying content hashes.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let registry = Registry {
            dir: Some(dir.clone()),
            namespaces: RwLock::default(),
        };
        let index_path = dir.join(INDEX_FILE);
        if !index_path.exists() {
            return Ok(registry);
        }
        let bytes = fs::read(&index_path).map_err(io_err(&index_path))?;
        let index: Index = serde_json::from_slice(&bytes).map_err(|e| RegistryError::Corrupt {
            path: index_path.clone(),
            message: e.to_string(),
        })?;
        {
            let mut namespaces = registry.namespaces.write().expect("registry lock");
            for entry in index.artifacts {
                let path = dir.join(&entry.file);
                let bytes = fs::read(&path).map_err(io_err(&path))?;
                let artifact: VersionedArtifact =
                    serde_json::from_slice(&bytes).map_err(|e| RegistryError::Corrupt {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                if artifact.content_hash() != entry.content_hash
                    || artifact.namespace() != entry.namespace
                    || artifact.version() != entry.version
                {
                    return Err(RegistryError::Corrupt {
                        path,
                        message: "artifact does not match its index entry".into(),
                    });
                }
                insert_sorted(namespaces.entry(entry.namespace).or_default(), Arc::new(artifact));
            }
        }
        Ok(registry)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn register(&self, artifact: VersionedArtifact) -> Result<Arc<VersionedArtifact>, RegistryError> {
        let mut namespaces = self.namespaces.write().expect("registry lock");
        let existing = namespaces.get(artifact.namespace());
        if existing.is_some_and(|list| list.iter().any(|a| a.version() == artifact.version())) {
            return Err(RegistryError::VersionConflict {
                namespace: artifact.namespace().to_string(),
                version: artifact.version().to_string(),
            });
        }
        let artifact = Arc::new(artifact);
        if let Some(dir) = &self.dir {
            let file = artifact_file_name(artifact.namespace(), artifact.version());
            let path = dir.join(&file);
            write_atomic(&path, artifact.to_json().as_bytes())?;
            let mut entries = index_entries(&namespaces);
            entries.push(IndexEntry {
                namespace: artifact.namespace().to_string(),
                version: artifact.version().to_string(),
                content_hash: artifact.content_hash().to_string(),
                created_at: artifact.created_at(),
                file,
            });
            let index = serde_json::to_vec_pretty(&Index { artifacts: entries }).expect("index json");
            write_atomic(&dir.join(INDEX_FILE), &index)?;
        }
        insert_sorted(
            namespaces.entry(artifact.namespace().to_string()).or_default(),
            artifact.clone(),
        );
        Ok(artifact)
    }

    /// Looks up an exact version, or the highest version for `"latest"`.
    pub fn resolve(&self, namespace: &str, version: &str) -> Result<Arc<VersionedArtifact>, RegistryError> {
        let namespaces = self.namespaces.read().expect("registry lock");
        let found = namespaces.get(namespace).and_then(|list| {
            if version == LATEST {
                list.last().cloned()
            } else {
                list.iter().find(|a| a.version() == version).cloned()
            }
        });
        found.ok_or_else(|| RegistryError::NotFound {
            namespace: namespace.to_string(),
            version: version.to_string(),
        })
    }

    /// Every registered artifact, by namespace then ascending version.
    pub fn list(&self) -> Vec<IndexEntry> {
        index_entries(&self.namespaces.read().expect("registry lock"))
    }
}

fn insert_sorted(list: &mut Vec<Arc<VersionedArtifact>>, artifact: Arc<VersionedArtifact>) {
    let pos = list.partition_point(|a| compare_versions(a.version(), artifact.version()).is_lt());
    list.insert(pos, artifact);
}

fn index_entries(namespaces: &BTreeMap<String, Vec<Arc<VersionedArtifact>>>) -> Vec<IndexEntry> {
    namespaces
        .values()
        .flatten()
        .map(|a| IndexEntry {
            namespace: a.namespace().to_string(),
            version: a.version().to_string(),
            content_hash: a.content_hash().to_string(),
            created_at: a.created_at(),
            file: artifact_file_name(a.namespace(), a.version()),
        })
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RegistryError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{snapshot, KnowledgeBase};

    fn artifact(ns: &str, version: &str) -> VersionedArtifact {
        let kb = KnowledgeBase {
            namespace: ns.into(),
            version: version.into(),
            factors: vec![],
            recommendations: vec![],
        };
        snapshot(&kb).unwrap()
    }

    #[test]
    fn latest_uses_version_order() {
        let reg = Registry::in_memory();
        reg.register(artifact("nccn.breast", "2024.10")).unwrap();
        reg.register(artifact("nccn.breast", "2024.2")).unwrap();
        reg.register(artifact("nccn.breast", "2024.3")).unwrap();
        assert_eq!(reg.resolve("nccn.breast", LATEST).unwrap().version(), "2024.10");
        assert_eq!(reg.resolve("nccn.breast", "2024.2").unwrap().version(), "2024.2");
    }

    #[test]
    fn duplicate_register_conflicts() {
        let reg = Registry::in_memory();
        reg.register(artifact("nccn.breast", "2024.3")).unwrap();
        assert!(matches!(
            reg.register(artifact("nccn.breast", "2024.3")),
            Err(RegistryError::VersionConflict { .. })
        ));
    }

    #[test]
    fn resolve_miss() {
        let reg = Registry::in_memory();
        assert!(matches!(
            reg.resolve("nccn.lung", LATEST),
            Err(RegistryError::NotFound { .. })
        ));
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        {
            let reg = Registry::open(dir.path()).unwrap();
            reg.register(artifact("nccn.breast", "2024.2")).unwrap();
            reg.register(artifact("ucsf.breast", "1")).unwrap();
        }
        assert!(dir.path().join("nccn.breast@2024.2.json").exists());
        let reg = Registry::open(dir.path()).unwrap();
        assert_eq!(reg.list().len(), 2);
        assert!(matches!(
            reg.register(artifact("nccn.breast", "2024.2")),
            Err(RegistryError::VersionConflict { .. })
        ));
        reg.register(artifact("nccn.breast", "2024.3")).unwrap();
        let reg = Registry::open(dir.path()).unwrap();
        assert_eq!(reg.resolve("nccn.breast", LATEST).unwrap().version(), "2024.3");
    }

    #[test]
    fn tampered_artifact_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        Registry::open(dir.path())
            .unwrap()
            .register(artifact("nccn.breast", "1"))
            .unwrap();
        let path = dir.path().join("nccn.breast@1.json");
        let text = fs::read_to_string(&path).unwrap().replace("\"factors\":[]", "\"factors\":[{\"name\":\"x\",\"question\":\"X?\"}]");
        fs::write(&path, text).unwrap();
        assert!(matches!(Registry::open(dir.path()), Err(RegistryError::Corrupt { .. })));
    }
}
