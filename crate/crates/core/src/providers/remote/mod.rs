//! HTTP-backed providers.
//!
//! Shared plumbing lives here: configuration, the redacted API key, retry with
//! exponential backoff, and a per-provider token-bucket rate limiter. Each
//! wire format is confined to its own adapter file.

mod nli_http;
mod openai_chat;
mod openai_embed;

use std::fmt;
use std::future::Future;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::Mutex;

pub use nli_http::HttpNli;
pub use openai_chat::OpenAiChat;
pub use openai_embed::OpenAiEmbedder;

use super::{ProviderError, ProviderResult, Providers};

pub const MAX_RETRIES: u32 = 5;

/// An API key that never prints.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Replaces any occurrence of the key in `text`.
    pub fn scrub(&self, text: &str) -> String {
        if self.0.is_empty() {
            text.to_string()
        } else {
            text.replace(&self.0, "[redacted]")
        }
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey([redacted])")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("environment variable {0} is not set")]
    Missing(&'static str),
    #[error("retries must be <= {MAX_RETRIES}, got {0}")]
    TooManyRetries(u32),
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("invalid base url {0:?}")]
    BadUrl(String),
    #[error("probing embedding dimension failed: {0}")]
    Probe(ProviderError),
}

#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key: ApiKey,
    pub model_name: String,
    pub timeout: Duration,
    pub retries: u32,
    /// Token-bucket refill rate; `None` disables rate limiting.
    pub requests_per_second: Option<f64>,
    /// First backoff delay; doubles on every retry.
    pub backoff_base: Duration,
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>, api_key: ApiKey, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key,
            model_name: model_name.into(),
            timeout: Duration::from_secs(60),
            retries: 3,
            requests_per_second: None,
            backoff_base: Duration::from_millis(500),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.retries > MAX_RETRIES {
            return Err(ConfigError::TooManyRetries(self.retries));
        }
        if self.timeout.is_zero() {
            return Err(ConfigError::ZeroTimeout);
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(ConfigError::BadUrl(self.base_url.clone()));
        }
        Ok(())
    }

    pub(crate) fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

/// Classic token bucket: capacity `max(1, rate)` tokens, refilled at `rate`
/// tokens per second.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate: f64) -> Self {
        let capacity = rate.max(1.0);
        Self {
            rate,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub async fn acquire(&self) {
        let mut state = self.state.lock().await;
        loop {
            let now = Instant::now();
            let (tokens, last) = *state;
            let refilled = (tokens + now.duration_since(last).as_secs_f64() * self.rate)
                .min(self.capacity);
            if refilled >= 1.0 {
                *state = (refilled - 1.0, now);
                return;
            }
            *state = (refilled, now);
            let wait = (1.0 - refilled) / self.rate;
            tokio::time::sleep(Duration::from_secs_f64(wait)).await;
        }
    }
}

/// Runs `op` up to `1 + retries` times, sleeping `base * 2^n` between
/// attempts. Only transient errors are retried.
pub async fn with_retries<T, F, Fut>(retries: u32, base: Duration, mut op: F) -> ProviderResult<T>
where
    F: FnMut(u32) -> Fut,
    Fut: Future<Output = ProviderResult<T>>,
{
    let mut attempt = 0;
    loop {
        match op(attempt).await {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && attempt < retries => {
                let delay = base.saturating_mul(1u32 << attempt.min(16));
                tracing::warn!(attempt = attempt + 1, error = %e, "provider call failed, retrying");
                tokio::time::sleep(delay).await;
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Thin JSON-over-HTTP client shared by the adapters.
#[derive(Debug)]
pub(crate) struct HttpJson {
    pub(crate) config: ProviderConfig,
    client: reqwest::Client,
    limiter: Option<TokenBucket>,
}

impl HttpJson {
    pub(crate) fn new(config: ProviderConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|_| ConfigError::BadUrl(config.base_url.clone()))?;
        let limiter = config.requests_per_second.map(TokenBucket::new);
        Ok(Self {
            config,
            client,
            limiter,
        })
    }

    pub(crate) async fn post<B, R>(&self, path: &str, body: &B) -> ProviderResult<R>
    where
        B: Serialize + Sync,
        R: DeserializeOwned,
    {
        let url = self.config.endpoint(path);
        with_retries(self.config.retries, self.config.backoff_base, |_| async {
            if let Some(limiter) = &self.limiter {
                limiter.acquire().await;
            }
            self.post_once(&url, body).await
        })
        .await
    }

    async fn post_once<B, R>(&self, url: &str, body: &B) -> ProviderResult<R>
    where
        B: Serialize + Sync,
        R: DeserializeOwned,
    {
        let key = &self.config.api_key;
        let mut req = self.client.post(url).json(body);
        if !key.is_empty() {
            req = req.bearer_auth(key.expose());
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(key.scrub(&e.without_url().to_string()))
            }
        })?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(key.scrub(&e.without_url().to_string()))
            }
        })?;
        if !status.is_success() {
            let diagnostic: String = key.scrub(&text).chars().take(512).collect();
            return Err(ProviderError::Rejected {
                status: status.as_u16(),
                diagnostic,
            });
        }
        serde_json::from_str(&text)
            .map_err(|e| ProviderError::Malformed(key.scrub(&e.to_string())))
    }
}

fn env(name: &'static str) -> Result<String, ConfigError> {
    std::env::var(name)
        .ok()
        .filter(|v| !v.is_empty())
        .ok_or(ConfigError::Missing(name))
}

/// Builds remote providers from `PPA_CHAT_URL`, `PPA_CHAT_KEY`,
/// `PPA_CHAT_MODEL`, `PPA_EMBED_URL`, `PPA_EMBED_KEY`, `PPA_NLI_URL` and
/// `PPA_NLI_KEY`. `PPA_EMBED_MODEL` optionally names the embedding model.
/// The embedding dimension is probed once here.
pub async fn providers_from_env() -> Result<Providers, ConfigError> {
    let chat = OpenAiChat::new(ProviderConfig::new(
        env("PPA_CHAT_URL")?,
        ApiKey::new(env("PPA_CHAT_KEY").unwrap_or_default()),
        env("PPA_CHAT_MODEL")?,
    ))?;
    let embed_cfg = ProviderConfig::new(
        env("PPA_EMBED_URL")?,
        ApiKey::new(env("PPA_EMBED_KEY").unwrap_or_default()),
        std::env::var("PPA_EMBED_MODEL").unwrap_or_else(|_| "text-embedding-3-small".into()),
    );
    let embedder = OpenAiEmbedder::connect(embed_cfg).await?;
    let nli = HttpNli::new(ProviderConfig::new(
        env("PPA_NLI_URL")?,
        ApiKey::new(env("PPA_NLI_KEY").unwrap_or_default()),
        "nli",
    ))?;
    Ok(Providers::new(Arc::new(chat), Arc::new(embedder), Arc::new(nli)))
}

/// Whether the environment names a remote chat endpoint.
pub fn remote_configured() -> bool {
    std::env::var("PPA_CHAT_URL").is_ok_and(|v| !v.is_empty())
}


#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn key_never_debug_printed() {
        let cfg = ProviderConfig::new("http://x", ApiKey::new("sk-secret-123"), "m");
        let dbg = format!("{cfg:?}");
        assert!(!dbg.contains("sk-secret-123"));
        assert!(dbg.contains("[redacted]"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ProviderConfig::new("http://x", ApiKey::default(), "m");
        assert!(cfg.validate().is_ok());
        cfg.retries = 6;
        assert!(matches!(cfg.validate(), Err(ConfigError::TooManyRetries(6))));
        cfg.retries = 5;
        cfg.timeout = Duration::ZERO;
        assert!(matches!(cfg.validate(), Err(ConfigError::ZeroTimeout)));
        cfg.timeout = Duration::from_secs(1);
        cfg.base_url = "ftp://x".into();
        assert!(cfg.validate().is_err());
    }

    #[tokio::test]
    async fn retries_until_success() {
        let calls = AtomicU32::new(0);
        let out = with_retries(3, Duration::from_millis(1), |_| async {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(ProviderError::Transport("down".into()))
            } else {
                Ok(7)
            }
        })
        .await;
        assert_eq!(out, Ok(7));
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[tokio::test]
    async fn retries_exhausted_and_permanent_errors() {
        let calls = AtomicU32::new(0);
        let out: ProviderResult<()> = with_retries(1, Duration::from_millis(1), |_| async {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(ProviderError::Timeout)
        })
        .await;
        assert_eq!(out, Err(ProviderError::Timeout));
        assert_eq!(calls.load(Ordering::SeqCst), 2);

        let calls = AtomicU32::new(0);
        let out: ProviderResult<()> = with_retries(3, Duration::from_millis(1), |_| async {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(ProviderError::Rejected {
                status: 400,
                diagnostic: "bad".into(),
            })
        })
        .await;
        assert!(out.is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[tokio::test]
    async fn token_bucket_paces_requests() {
        let bucket = TokenBucket::new(50.0);
        let start = Instant::now();
        for _ in 0..60 {
            bucket.acquire().await;
        }
        // 50 burst tokens, then 10 more at 50/s.
        assert!(start.elapsed() >= Duration::from_millis(150));
    }
}
