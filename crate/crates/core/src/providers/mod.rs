//! Provider contracts for chat completion, sentence embedding and NLI
//! classification, with deterministic mocks and HTTP-backed remote adapters.

pub mod fixtures;
pub mod mock;
pub mod remote;

use std::fmt;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

pub use mock::{
    FailingChat, HashedEmbedder, RuleBasedChat, ScriptedChat, ScriptedNli, DEFAULT_MOCK_DIMENSION,
};
pub use remote::ProviderConfig;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("remote rejected request (status {status}): {diagnostic}")]
    Rejected { status: u16, diagnostic: String },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

impl ProviderError {
    /// Whether a retry of the same request might succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            Self::Transport(_) | Self::Timeout => true,
            Self::Rejected { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub type ProviderResult<T> = Result<T, ProviderError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub const DEFAULT_MAX_TOKENS: u32 = 512;

    /// Deterministic request (temperature 0) with the default token budget.
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: Self::DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> ProviderResult<()> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("prompt is empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ProviderError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entail,
    Neutral,
    Contradict,
}

impl NliLabel {
    /// Consistency weight used by the C-Score: +1 / 0 / -1.
    pub fn weight(self) -> f64 {
        match self {
            Self::Entail => 1.0,
            Self::Neutral => 0.0,
            Self::Contradict => -1.0,
        }
    }

    /// Accepts the common spellings used by NLI model cards.
    pub fn parse(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "entail" | "entailment" | "entails" => Some(Self::Entail),
            "neutral" => Some(Self::Neutral),
            "contradict" | "contradiction" | "contradicts" => Some(Self::Contradict),
            _ => None,
        }
    }
}

impl fmt::Display for NliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Entail => "entail",
            Self::Neutral => "neutral",
            Self::Contradict => "contradict",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliVerdict {
    pub label: NliLabel,
    pub confidence: f64,
}

impl NliVerdict {
    pub fn new(label: NliLabel, confidence: f64) -> Self {
        Self {
            label,
            confidence: confidence.clamp(0.0, 1.0),
        }
    }
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    /// Identity recorded in experiment manifests.
    fn name(&self) -> String;

    async fn complete(&self, req: &ChatRequest) -> ProviderResult<String>;
}

#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> String;

    /// Output dimension; constant for the lifetime of the provider.
    fn dimension(&self) -> usize;

    async fn embed(&self, text: &str) -> ProviderResult<Vec<f64>>;
}

#[async_trait]
pub trait NliProvider: Send + Sync {
    fn name(&self) -> String;

    async fn classify(&self, premise: &str, hypothesis: &str) -> ProviderResult<NliVerdict>;
}

/// The three providers a pipeline run needs, shareable across tasks.
#[derive(Clone)]
pub struct Providers {
    pub chat: Arc<dyn ChatProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub nli: Arc<dyn NliProvider>,
}

impl Providers {
    pub fn new(
        chat: Arc<dyn ChatProvider>,
        embedder: Arc<dyn EmbeddingProvider>,
        nli: Arc<dyn NliProvider>,
    ) -> Self {
        Self {
            chat,
            embedder,
            nli,
        }
    }

    /// Fully offline provider set: rule-based chat, hashed bag-of-words
    /// embedder, and an NLI mock that entails on verbatim containment.
    pub fn offline() -> Self {
        Self::new(
            Arc::new(RuleBasedChat),
            Arc::new(HashedEmbedder::default()),
            Arc::new(ScriptedNli::default().with_containment_rule(true)),
        )
    }

    /// Remote providers configured from `PPA_*` environment variables.
    pub async fn from_env() -> Result<Self, remote::ConfigError> {
        remote::providers_from_env().await
    }

    pub fn identities(&self) -> ProviderIdentities {
        ProviderIdentities {
            chat: self.chat.name(),
            embedder: self.embedder.name(),
            nli: self.nli.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderIdentities {
    pub chat: String,
    pub embedder: String,
    pub nli: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_request_validation() {
        assert!(ChatRequest::new("hi").validate().is_ok());
        assert!(ChatRequest::new("  ").validate().is_err());
        assert!(ChatRequest::new("x").with_temperature(-0.1).validate().is_err());
    }

    #[test]
    fn nli_label_spellings() {
        assert_eq!(NliLabel::parse("ENTAILMENT"), Some(NliLabel::Entail));
        assert_eq!(NliLabel::parse("contradiction"), Some(NliLabel::Contradict));
        assert_eq!(NliLabel::parse("maybe"), None);
        assert_eq!(NliLabel::Contradict.weight(), -1.0);
    }

    #[test]
    fn verdict_confidence_clamped() {
        assert_eq!(NliVerdict::new(NliLabel::Entail, 1.7).confidence, 1.0);
    }
}
