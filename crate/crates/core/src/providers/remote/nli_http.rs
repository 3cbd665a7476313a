//! NLI adapter (`POST {base}/nli` with `{premise, hypothesis}`), answering
//! `{label, confidence}`; `score` is accepted as an alias of `confidence`.

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ConfigError, HttpJson, ProviderConfig};
use crate::providers::{NliLabel, NliProvider, NliVerdict, ProviderError, ProviderResult};

#[derive(Serialize)]
struct Body<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Deserialize)]
struct Reply {
    label: String,
    #[serde(alias = "score", default = "one")]
    confidence: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug)]
pub struct HttpNli {
    http: HttpJson,
}

impl HttpNli {
    pub fn new(config: ProviderConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            http: HttpJson::new(config)?,
        })
    }
}

#[async_trait]
impl NliProvider for HttpNli {
    fn name(&self) -> String {
        format!("http-nli:{}", self.http.config.base_url)
    }

    async fn classify(&self, premise: &str, hypothesis: &str) -> ProviderResult<NliVerdict> {
        if premise.trim().is_empty() || hypothesis.trim().is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let reply: Reply = self
            .http
            .post("nli", &Body {
                premise,
                hypothesis,
            })
            .await?;
        let label = NliLabel::parse(&reply.label)
            .ok_or_else(|| ProviderError::Malformed(format!("unknown label {:?}", reply.label)))?;
        Ok(NliVerdict::new(label, reply.confidence))
    }
}
