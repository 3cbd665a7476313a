//! Embeddings adapter (`POST {base}/embeddings`).

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ConfigError, HttpJson, ProviderConfig};
use crate::providers::{EmbeddingProvider, ProviderError, ProviderResult};

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct Reply {
    data: Vec<Item>,
}

#[derive(Deserialize)]
struct Item {
    embedding: Vec<f64>,
}

#[derive(Debug)]
pub struct OpenAiEmbedder {
    http: HttpJson,
    dimension: usize,
}

impl OpenAiEmbedder {
    /// Connects and probes the model once to learn its output dimension.
    pub async fn connect(config: ProviderConfig) -> Result<Self, ConfigError> {
        let http = HttpJson::new(config)?;
        let probe = Self::request(&http, "dimension probe")
            .await
            .map_err(ConfigError::Probe)?;
        Ok(Self {
            http,
            dimension: probe.len(),
        })
    }

    /// Skips the probe when the dimension is already known.
    pub fn with_dimension(config: ProviderConfig, dimension: usize) -> Result<Self, ConfigError> {
        Ok(Self {
            http: HttpJson::new(config)?,
            dimension,
        })
    }

    async fn request(http: &HttpJson, text: &str) -> ProviderResult<Vec<f64>> {
        let body = Body {
            model: &http.config.model_name,
            input: text,
        };
        let reply: Reply = http.post("embeddings", &body).await?;
        let v = reply
            .data
            .into_iter()
            .next()
            .map(|i| i.embedding)
            .ok_or_else(|| ProviderError::Malformed("no embedding in response".into()))?;
        if v.is_empty() {
            return Err(ProviderError::Malformed("empty embedding".into()));
        }
        Ok(v)
    }
}

#[async_trait]
impl EmbeddingProvider for OpenAiEmbedder {
    fn name(&self) -> String {
        format!("openai-embed:{}", self.http.config.model_name)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    async fn embed(&self, text: &str) -> ProviderResult<Vec<f64>> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let v = Self::request(&self.http, text).await?;
        if v.len() != self.dimension {
            return Err(ProviderError::Malformed(format!(
                "embedding dimension changed from {} to {}",
                self.dimension,
                v.len()
            )));
        }
        Ok(v)
    }
}
