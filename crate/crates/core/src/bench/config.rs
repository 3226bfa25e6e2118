use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::gateway::{LlmGateway, OpenAiConfig, OpenAiGateway};
use crate::model::RolloutConfig;
use crate::retrieval::{Bm25Index, RemoteRetriever, Retriever};
use crate::rollout::{Collaborators, TracingSink};
use crate::squeeze::Squeezer;

/// One OpenAI-compatible model endpoint. The key is read from the
/// environment variable named by `api_key_env`, never from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: Option<String>,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_calls: Option<u64>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        let d = OpenAiConfig::default();
        Self {
            base_url: d.base_url,
            model: d.model,
            api_key_env: None,
            max_retries: d.max_retries,
            timeout_secs: d.timeout_secs,
            max_in_flight: d.max_in_flight,
            max_calls: d.max_calls,
        }
    }
}

impl EndpointConfig {
    pub fn to_openai(&self) -> Result<OpenAiConfig, BenchError> {
        if self.model.is_empty() {
            return Err(BenchError::Config(format!("endpoint {} has no model", self.base_url)));
        }
        let api_key = match &self.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| BenchError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        Ok(OpenAiConfig {
            base_url: self.base_url.clone(),
            api_key,
            model: self.model.clone(),
            max_retries: self.max_retries,
            timeout_secs: self.timeout_secs,
            max_calls: self.max_calls,
            max_in_flight: self.max_in_flight,
            ..OpenAiConfig::default()
        })
    }

    pub fn gateway(&self) -> crate::Result<Arc<dyn LlmGateway>> {
        Ok(Arc::new(OpenAiGateway::new(self.to_openai()?)?))
    }
}

impl RetrievalConfig {
    /// Loads the saved index, or connects to the remote service.
    pub fn retriever(&self) -> crate::Result<Arc<dyn Retriever>> {
        match (&self.index, &self.remote_url) {
            (Some(path), _) => Ok(Arc::new(Bm25Index::load(path)?)),
            (None, Some(url)) => {
                let timeout = Duration::from_secs(self.timeout_secs.unwrap_or(30));
                Ok(Arc::new(RemoteRetriever::new(url.clone(), timeout)?))
            }
            (None, None) => Err(BenchError::Config("retrieval needs an index path or a remote_url".into()).into()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Saved BM25 index.
    pub index: Option<PathBuf>,
    /// Remote retrieval service, used when no index is given.
    pub remote_url: Option<String>,
    pub timeout_secs: Option<u64>,
}

/// TOML run configuration: rollout settings plus endpoints.
///
/// ```toml
/// parallelism = 8
/// seed = 42
///
/// [rollout]
/// max_turns = 4
/// n_expansions = 3
/// top_k = 10
///
/// [policy]
/// base_url = "http://localhost:8000/v1"
/// model = "policy-3b"
///
/// [squeezer]
/// base_url = "http://localhost:8001/v1"
/// model = "squeezer-7b"
///
/// [retrieval]
/// index = "wiki.bm25"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub parallelism: usize,
    pub seed: u64,
    pub rollout: RolloutConfig,
    pub policy: EndpointConfig,
    pub squeezer: EndpointConfig,
    pub classifier: Option<EndpointConfig>,
    pub retrieval: RetrievalConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            parallelism: 8,
            seed: 0,
            rollout: RolloutConfig::default(),
            policy: EndpointConfig::default(),
            squeezer: EndpointConfig::default(),
            classifier: None,
            retrieval: RetrievalConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.parallelism == 0 {
            return Err(BenchError::Config("parallelism must be at least 1".into()));
        }
        self.rollout.validate().map_err(|e| BenchError::Config(e.to_string()))
    }

    /// Policy, retriever and squeezer as configured, logging events through `tracing`.
    pub fn collaborators(&self) -> crate::Result<Collaborators> {
        let policy = self.policy.gateway()?;
        let squeezer = Squeezer::new(self.squeezer.gateway()?);
        Ok(Collaborators::new(policy, self.retrieval.retriever()?, squeezer).with_sink(Arc::new(TracingSink)))
    }

    /// The rollout config with the run seed filled in.
    pub fn seeded_rollout(&self) -> RolloutConfig {
        let mut cfg = self.rollout.clone();
        cfg.seed.get_or_insert(self.seed);
        cfg
    }
}
