//! Session configuration, loadable from a TOML key-value file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cassette::Mode;
use crate::embed::MIN_HASH_DIM;
use crate::error::{Error, Result};
use crate::eval::{Pooling, OVERALL_THRESHOLD};
use crate::generation::CompletionConfig;

/// Which embedding provider a session uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    /// `hash` (deterministic offline fallback) or `remote`.
    pub provider: String,
    pub dim: usize,
    pub seed: u64,
    /// Remote provider settings.
    pub url: String,
    pub model: Option<String>,
    pub auth_header: Option<String>,
    pub secret_env: Option<String>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: "hash".to_string(),
            dim: 256,
            seed: 42,
            url: String::new(),
            model: None,
            auth_header: None,
            secret_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionOptions {
    /// Retrieval depth; the paper's default is 4.
    pub k: usize,
    pub mode: Mode,
    pub cassette: Option<PathBuf>,
    pub workers: usize,
    pub seed: u64,
    /// Reuse one index per image across a batch eval instead of rebuilding
    /// per question.
    pub per_image_cache: bool,
    pub pooling: Pooling,
    pub threshold: f64,
    pub synonyms: Option<PathBuf>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            k: 4,
            mode: Mode::Live,
            cassette: None,
            workers: 4,
            seed: 42,
            per_image_cache: false,
            pooling: Pooling::Micro,
            threshold: OVERALL_THRESHOLD,
            synonyms: None,
        }
    }
}

/// Full session configuration (`docs/config.md`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub embedding: EmbeddingConfig,
    pub completion: CompletionConfig,
    pub session: SessionOptions,
}

impl SessionConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SessionConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.session.k < 1 {
            return Err(Error::Config("k must be >= 1".to_string()));
        }
        if self.session.workers < 1 {
            return Err(Error::Config("workers must be >= 1".to_string()));
        }
        match self.embedding.provider.as_str() {
            "hash" => {
                if self.embedding.dim < MIN_HASH_DIM {
                    return Err(Error::Config(format!(
                        "hash embedding dim must be >= {MIN_HASH_DIM}"
                    )));
                }
            }
            "remote" => {
                if self.embedding.url.is_empty() && self.session.mode != Mode::Replay {
                    return Err(Error::Config(
                        "remote embedding provider requires a url".to_string(),
                    ));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown embedding provider {other:?}, expected hash|remote"
                )));
            }
        }
        if matches!(self.session.mode, Mode::Record | Mode::Replay)
            && self.session.cassette.is_none()
        {
            return Err(Error::Config(format!(
                "{} mode requires session.cassette",
                self.session.mode
            )));
        }
        self.completion.validate()?;
        Ok(())
    }
}
