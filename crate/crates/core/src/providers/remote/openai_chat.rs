//! Chat-completions adapter (`POST {base}/chat/completions`).

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ConfigError, HttpJson, ProviderConfig};
use crate::providers::{ChatProvider, ChatRequest, ProviderError, ProviderResult};

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct Reply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug)]
pub struct OpenAiChat {
    http: HttpJson,
}

impl OpenAiChat {
    pub fn new(config: ProviderConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            http: HttpJson::new(config)?,
        })
    }
}

#[async_trait]
impl ChatProvider for OpenAiChat {
    fn name(&self) -> String {
        format!("openai-chat:{}", self.http.config.model_name)
    }

    async fn complete(&self, req: &ChatRequest) -> ProviderResult<String> {
        req.validate()?;
        let body = Body {
            model: &self.http.config.model_name,
            messages: [Message {
                role: "user",
                content: &req.prompt,
            }],
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            seed: req.seed,
        };
        let reply: Reply = self.http.post("chat/completions", &body).await?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Malformed("no choices in completion".into()))
    }
}
