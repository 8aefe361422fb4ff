//! TOML configuration shared by the CLI and the HTTP service.
//!
//! The remote credential is never read from the file; it comes from the
//! [`API_KEY_ENV`] environment variable.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{FixtureError, FixtureOracle, Oracle, RemoteConfig, RemoteOracle};

pub const API_KEY_ENV: &str = "RPKT_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("oracle must be `fixture:PATH` or `remote`, got {0:?}")]
    OracleSpec(String),
    #[error("fixture mode needs a fixture path")]
    MissingFixture,
    #[error(transparent)]
    Fixture(#[from] FixtureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    pub server: ServerConfig,
    pub oracle: OracleConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("rpkt-data"),
            server: ServerConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    /// Origins allowed to call the API from a browser.
    pub cors_origins: Vec<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            cors_origins: vec!["http://localhost:5173".into()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub mode: OracleKind,
    pub fixture: Option<PathBuf>,
    pub remote: RemoteConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Fixture,
    Remote,
}

/// Oracle selection as given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleSpec {
    Fixture(PathBuf),
    Remote,
}

impl FromStr for OracleSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            _ if s == "remote" => Ok(OracleSpec::Remote),
            Some(("fixture", path)) if !path.is_empty() => Ok(OracleSpec::Fixture(path.into())),
            _ => Err(ConfigError::OracleSpec(s.to_string())),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// The configured oracle, or `spec` when given.
    pub fn oracle_spec(&self, spec: Option<OracleSpec>) -> Result<OracleSpec, ConfigError> {
        if let Some(spec) = spec {
            return Ok(spec);
        }
        match self.oracle.mode {
            OracleKind::Remote => Ok(OracleSpec::Remote),
            OracleKind::Fixture => self
                .oracle
                .fixture
                .clone()
                .map(OracleSpec::Fixture)
                .ok_or(ConfigError::MissingFixture),
        }
    }

    /// Remote settings with the credential taken from the environment.
    pub fn remote(&self) -> RemoteConfig {
        let mut remote = self.oracle.remote.clone();
        remote.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        remote
    }

    pub fn build_oracle(&self, spec: &OracleSpec) -> Result<Arc<dyn Oracle>, ConfigError> {
        Ok(match spec {
            OracleSpec::Fixture(path) => Arc::new(FixtureOracle::load(path)?),
            OracleSpec::Remote => Arc::new(RemoteOracle::http(self.remote())),
        })
    }
}
