//! Collection from a chat-completions-shaped HTTP endpoint.
//!
//! One request per sequence: a single user message carrying the task prompt,
//! no system prompt, sampling parameters left at provider defaults unless a
//! temperature is configured.

use std::fmt;
use std::time::Duration;

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use url::Url;

use super::{build_prompt, clean_response, Draw, LengthSpec, Outcome, SequenceSource, SourceError};
use crate::rng::record_rng;

/// Appended to `base_url` to form the request URL.
pub const CHAT_COMPLETIONS_PATH: &str = "v1/chat/completions";

#[derive(Clone, Serialize, Deserialize)]
pub struct LlmEndpointConfig {
    pub base_url: Url,
    pub model_name: String,
    #[serde(skip_serializing)]
    pub api_key: String,
    pub temperature: Option<f64>,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    #[serde(with = "duration_secs")]
    pub backoff_base: Duration,
    /// Requests kept in flight at once.
    pub concurrency: usize,
}

impl fmt::Debug for LlmEndpointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmEndpointConfig")
            .field("base_url", &self.base_url.as_str())
            .field("model_name", &self.model_name)
            .field("api_key", &"<redacted>")
            .field("temperature", &self.temperature)
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .field("backoff_base", &self.backoff_base)
            .field("concurrency", &self.concurrency)
            .finish()
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

impl LlmEndpointConfig {
    pub fn new(base_url: Url, model_name: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url,
            model_name: model_name.into(),
            api_key: api_key.into(),
            temperature: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            concurrency: 4,
        }
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if self.base_url.cannot_be_a_base() || !matches!(self.base_url.scheme(), "http" | "https") {
            return Err(SourceError::Config(format!(
                "base_url must be an absolute http(s) URL, got {}",
                self.base_url
            )));
        }
        if let Some(t) = self.temperature {
            if !(0.0..=2.0).contains(&t) {
                return Err(SourceError::Config(format!(
                    "temperature {t} is outside [0, 2]"
                )));
            }
        }
        if self.model_name.is_empty() {
            return Err(SourceError::Config("model name is empty".into()));
        }
        if self.concurrency == 0 {
            return Err(SourceError::Config("concurrency must be at least 1".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> Url {
        let mut base = self.base_url.clone();
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        base.join(CHAT_COMPLETIONS_PATH)
            .expect("constant relative path joins onto an http base")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatCompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct ChatCompletionResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Reply {
    Content {
        text: String,
        finish_reason: Option<String>,
    },
    Malformed(String),
}

enum Failure {
    Retryable(String),
    Fatal(SourceError),
}

pub struct LlmSource {
    config: LlmEndpointConfig,
    spec: LengthSpec,
    seed: u64,
    client: reqwest::Client,
    runtime: tokio::runtime::Runtime,
}

impl fmt::Debug for LlmSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmSource")
            .field("config", &self.config)
            .field("spec", &self.spec)
            .field("seed", &self.seed)
            .finish()
    }
}

impl LlmSource {
    pub fn new(config: LlmEndpointConfig, spec: LengthSpec, seed: u64) -> Result<Self, SourceError> {
        config.validate()?;
        spec.validate()?;
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| SourceError::Config(e.to_string()))?;
        let runtime = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .map_err(|e| SourceError::Config(e.to_string()))?;
        Ok(Self {
            config,
            spec,
            seed,
            client,
            runtime,
        })
    }

    pub fn sequences(self) -> super::SequenceStream<Self> {
        super::SequenceStream::new(self)
    }

    /// Target length and request body for record `index`.
    pub fn request_for(&self, index: u64) -> Result<(usize, ChatCompletionRequest), SourceError> {
        let mut rng = record_rng(self.seed, index);
        let target = self.spec.sample(&mut rng)?;
        let request = ChatCompletionRequest {
            model: self.config.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: build_prompt(target),
            }],
            temperature: self.config.temperature,
        };
        Ok((target, request))
    }

    async fn fetch(&self, index: u64) -> Result<Draw, SourceError> {
        let (target, request) = self.request_for(index)?;
        let url = self.config.endpoint();
        let mut attempt: u32 = 0;
        let reply = loop {
            attempt += 1;
            match self.send_once(&url, &request).await {
                Ok(reply) => break reply,
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(message)) => {
                    if attempt > self.config.max_retries {
                        return Err(SourceError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    let delay = self.config.backoff_base * 2u32.saturating_pow(attempt - 1);
                    tokio::time::sleep(delay).await;
                }
            }
        };

        let mut meta = Map::new();
        meta.insert("seed".into(), self.seed.into());
        meta.insert("model".into(), self.config.model_name.clone().into());
        meta.insert("endpoint".into(), url.as_str().into());
        meta.insert("temperature".into(), json!(self.config.temperature));
        meta.insert("http_attempts".into(), attempt.into());

        let draw = match reply {
            Reply::Content {
                text,
                finish_reason,
            } => {
                if let Some(reason) = finish_reason {
                    meta.insert("finish_reason".into(), reason.into());
                }
                let outcome = match clean_response(&text) {
                    Ok(digits) => Outcome::Accepted(digits),
                    Err(e) => Outcome::Rejected(e.to_string()),
                };
                Draw {
                    outcome,
                    requested_length: Some(target),
                    raw_text: Some(text),
                    meta,
                }
            }
            Reply::Malformed(reason) => Draw {
                outcome: Outcome::Rejected(reason),
                requested_length: Some(target),
                raw_text: None,
                meta,
            },
        };
        Ok(draw)
    }

    async fn send_once(&self, url: &Url, request: &ChatCompletionRequest) -> Result<Reply, Failure> {
        let mut builder = self.client.post(url.clone()).json(request);
        // local endpoints may need no key; send no header rather than an empty one
        if !self.config.api_key.is_empty() {
            builder = builder.bearer_auth(&self.config.api_key);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status();
        let body = response
            .text()
            .await
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(SourceError::Http {
                status: status.as_u16(),
                body,
            }));
        }
        let parsed: ChatCompletionResponse = match serde_json::from_str(&body) {
            Ok(p) => p,
            Err(e) => return Ok(Reply::Malformed(format!("malformed response: {e}"))),
        };
        match parsed.choices.into_iter().next() {
            Some(Choice {
                message: ResponseMessage {
                    content: Some(text),
                },
                finish_reason,
            }) => Ok(Reply::Content {
                text,
                finish_reason,
            }),
            Some(_) => Ok(Reply::Malformed("response has no message content".into())),
            None => Ok(Reply::Malformed("response has no choices".into())),
        }
    }
}

impl SequenceSource for LlmSource {
    fn source_tag(&self) -> String {
        format!("llm:{}", self.config.model_name)
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }

    fn config(&self) -> Value {
        json!({
            "kind": "llm",
            "endpoint": self.config.endpoint().as_str(),
            "model": self.config.model_name,
            "temperature": self.config.temperature,
        })
    }

    fn length_spec(&self) -> Option<LengthSpec> {
        Some(self.spec)
    }

    fn draw(&mut self, index: u64) -> Result<Draw, SourceError> {
        self.runtime.block_on(self.fetch(index))
    }

    fn concurrency(&self) -> usize {
        self.config.concurrency
    }

    fn draw_batch(&mut self, start: u64, count: usize) -> Result<Vec<Draw>, SourceError> {
        let this = &*self;
        let requests = (start..start + count as u64).map(|i| this.fetch(i));
        this.runtime
            .block_on(join_all(requests))
            .into_iter()
            .collect()
    }
}
