use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lle_core::extract::llm::LlmConfigError;
use lle_core::extract::{Extractor, LlmConfig, LlmExtractor, MockConfigError, MockExtractor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    #[default]
    Mock,
    Llm,
}

fn default_port() -> u16 {
    8080
}

fn default_bind() -> IpAddr {
    IpAddr::V4(Ipv4Addr::LOCALHOST)
}

/// Service configuration. LLM credentials come from the environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_bind")]
    pub bind: IpAddr,
    pub registry_dir: PathBuf,
    pub session_dir: PathBuf,
    #[serde(default)]
    pub extractor: ExtractorKind,
    /// Pattern file for the mock extractor.
    #[serde(default)]
    pub mock_config: Option<PathBuf>,
    /// When set, every endpoint except `/healthz` requires this bearer token.
    #[serde(default)]
    pub bearer_token: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", .path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{} does not exist or is not a directory", .0.display())]
    MissingDir(PathBuf),
    #[error("the mock extractor needs `mock_config`")]
    MissingMockConfig,
    #[error(transparent)]
    Mock(#[from] MockConfigError),
    #[error(transparent)]
    Llm(#[from] LlmConfigError),
}

impl ServerConfig {
    pub fn new(registry_dir: impl Into<PathBuf>, session_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            port: default_port(),
            bind: default_bind(),
            registry_dir: registry_dir.into(),
            session_dir: session_dir.into(),
            extractor: ExtractorKind::Mock,
            mock_config: None,
            bearer_token: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_slice(&bytes).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }

    /// Both storage directories must already exist.
    pub fn check_dirs(&self) -> Result<(), ConfigError> {
        for dir in [&self.registry_dir, &self.session_dir] {
            if !dir.is_dir() {
                return Err(ConfigError::MissingDir(dir.clone()));
            }
        }
        Ok(())
    }

    pub fn build_extractor(&self) -> Result<Arc<dyn Extractor>, ConfigError> {
        match self.extractor {
            ExtractorKind::Mock => {
                let path = self.mock_config.as_ref().ok_or(ConfigError::MissingMockConfig)?;
                let bytes = std::fs::read(path).map_err(|source| ConfigError::Read {
                    path: path.clone(),
                    source,
                })?;
                Ok(Arc::new(MockExtractor::from_json(&bytes)?))
            }
            ExtractorKind::Llm => Ok(Arc::new(LlmExtractor::new(LlmConfig::from_env()?)?)),
        }
    }
}
