//! Remote chat / completion endpoints over JSON-over-HTTP.
//!
//! Request bodies follow the common OpenAI-compatible shape:
//! chat `{model, messages: [{role, content}], temperature, max_tokens}` and
//! completion `{model, prompt, temperature, max_tokens}`. The first choice's
//! `message.content` (chat) or `text` (completion) is the response.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendInfo, BackendKind, GatewayError, SampleRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemoteKind {
    Chat,
    Completion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            backoff_base_ms: 1000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

/// Spaces requests at least `1 / rate` seconds apart across all threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Option<Self> {
        (rate.is_finite() && rate > 0.0).then(|| RateLimiter {
            interval: Duration::from_secs_f64(1.0 / rate),
            next_slot: Mutex::new(Instant::now()),
        })
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// POSTs JSON with bearer auth read from an environment variable, retrying
/// transport errors, 429 and 5xx responses with exponential backoff.
#[derive(Debug)]
pub struct JsonClient {
    client: Client,
    auth_env: Option<String>,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
}

fn retryable_status(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status == StatusCode::REQUEST_TIMEOUT || status.is_server_error()
}

impl JsonClient {
    pub fn new(
        auth_env: Option<String>,
        retry: RetryPolicy,
        max_requests_per_second: Option<f64>,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(JsonClient {
            client,
            auth_env,
            retry,
            limiter: max_requests_per_second.and_then(RateLimiter::per_second),
        })
    }

    fn credential(&self) -> Result<Option<String>, GatewayError> {
        match &self.auth_env {
            None => Ok(None),
            Some(name) => std::env::var(name).map(Some).map_err(|_| {
                GatewayError::BackendUnavailable(format!("credential variable `{name}` is not set"))
            }),
        }
    }

    pub fn post(&self, endpoint: &str, body: &Value) -> Result<Value, GatewayError> {
        let token = self.credential()?;
        let mut attempt = 0u32;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            let mut request = self.client.post(endpoint).json(body);
            if let Some(token) = &token {
                request = request.bearer_auth(token);
            }
            let failure = match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response.json::<Value>().map_err(|e| {
                            GatewayError::BackendUnavailable(format!("malformed response body: {e}"))
                        });
                    }
                    let retry_after = response
                        .headers()
                        .get(reqwest::header::RETRY_AFTER)
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok())
                        .map(Duration::from_secs);
                    if !retryable_status(status) {
                        return Err(GatewayError::BackendUnavailable(format!("HTTP {status}")));
                    }
                    (format!("HTTP {status}"), retry_after)
                }
                // reqwest errors never include request headers, so no credential leaks here
                Err(e) => (format!("transport error: {}", e.without_url()), None),
            };
            if attempt >= self.retry.max_retries {
                return Err(GatewayError::BackendUnavailable(format!(
                    "{} after {} attempts",
                    failure.0,
                    attempt + 1
                )));
            }
            let delay = self.retry.delay(attempt).max(failure.1.unwrap_or_default());
            log::warn!("request to {endpoint} failed ({}); retrying in {delay:?}", failure.0);
            std::thread::sleep(delay);
            attempt += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub kind: RemoteKind,
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Name of the environment variable holding the API key.
    pub auth_env: Option<String>,
    pub retry: RetryPolicy,
    pub max_requests_per_second: Option<f64>,
    pub timeout_secs: u64,
}

impl RemoteConfig {
    pub fn new(kind: RemoteKind, endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        RemoteConfig {
            kind,
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            temperature: 1.0,
            max_tokens: 64,
            auth_env: None,
            retry: RetryPolicy::default(),
            max_requests_per_second: None,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    client: JsonClient,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, GatewayError> {
        if config.endpoint.trim().is_empty() || config.model_name.trim().is_empty() {
            return Err(GatewayError::Config(
                "remote backends need an endpoint and a model name".into(),
            ));
        }
        let client = JsonClient::new(
            config.auth_env.clone(),
            config.retry.clone(),
            config.max_requests_per_second,
            Duration::from_secs(config.timeout_secs),
        )?;
        Ok(RemoteBackend { config, client })
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        match self.config.kind {
            RemoteKind::Chat => json!({
                "model": self.config.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.config.temperature,
                "max_tokens": self.config.max_tokens,
            }),
            RemoteKind::Completion => json!({
                "model": self.config.model_name,
                "prompt": prompt,
                "temperature": self.config.temperature,
                "max_tokens": self.config.max_tokens,
            }),
        }
    }

    pub fn extract_text(kind: RemoteKind, body: &Value) -> Option<String> {
        let choice = body.get("choices")?.get(0)?;
        let text = match kind {
            RemoteKind::Chat => choice.get("message")?.get("content")?,
            RemoteKind::Completion => choice.get("text")?,
        };
        text.as_str().map(str::to_string)
    }
}

impl Backend for RemoteBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            kind: match self.config.kind {
                RemoteKind::Chat => BackendKind::RemoteChat,
                RemoteKind::Completion => BackendKind::RemoteCompletion,
            },
            model_name: self.config.model_name.clone(),
            endpoint: Some(self.config.endpoint.clone()),
            temperature: Some(self.config.temperature),
            seed: None,
        }
    }

    fn generate(&self, request: &SampleRequest<'_>) -> Result<String, GatewayError> {
        let body = self.client.post(&self.config.endpoint, &self.request_body(&request.probe.prompt))?;
        RemoteBackend::extract_text(self.config.kind, &body)
            .ok_or_else(|| GatewayError::BackendUnavailable("response has no generated text".into()))
    }
}
