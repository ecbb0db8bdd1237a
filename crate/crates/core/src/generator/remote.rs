use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{GenerationError, GenerationOutcome, GenerationRequest, Generator};
use crate::http::{
    HttpTransport, JsonClient, ReqwestTransport, RequestLimiter, RetryPolicy, Sleeper,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteGeneratorSettings {
    /// Full chat-completions URL, e.g. `https://host/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_in_flight: usize,
    pub requests_per_minute: usize,
    pub timeout_secs: u64,
}

impl Default for RemoteGeneratorSettings {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "llama-2-7b-chat".into(),
            api_key_env: "PROMPTEVO_API_KEY".into(),
            max_retries: retry.max_retries,
            initial_backoff_ms: retry.initial_backoff_ms,
            max_backoff_ms: retry.max_backoff_ms,
            max_in_flight: 4,
            requests_per_minute: 60,
            timeout_secs: 120,
        }
    }
}

impl RemoteGeneratorSettings {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            initial_backoff_ms: self.initial_backoff_ms,
            max_backoff_ms: self.max_backoff_ms,
        }
    }
}

/// Chat-completions client: one user message carrying the meta-prompt.
#[derive(Debug)]
pub struct RemoteGenerator {
    endpoint: String,
    model: String,
    provider_id: String,
    client: JsonClient,
}

impl RemoteGenerator {
    pub fn new(
        settings: &RemoteGeneratorSettings,
        transport: Arc<dyn HttpTransport>,
        credential: Option<String>,
    ) -> Self {
        let limiter =
            RequestLimiter::per_minute(settings.max_in_flight, settings.requests_per_minute);
        Self {
            endpoint: settings.endpoint.clone(),
            model: settings.model.clone(),
            provider_id: format!("remote:{}", settings.model),
            client: JsonClient::new(transport, settings.retry_policy(), limiter, credential),
        }
    }

    /// Builds an HTTPS client and reads the credential from `api_key_env`.
    pub fn from_env(settings: &RemoteGeneratorSettings) -> Result<Self, GenerationError> {
        let transport = ReqwestTransport::new(Duration::from_secs(settings.timeout_secs))
            .map_err(|e| GenerationError::Transport(e.0))?;
        let credential = std::env::var(&settings.api_key_env).ok();
        Ok(Self::new(settings, Arc::new(transport), credential))
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.client = self.client.with_sleeper(sleeper);
        self
    }

    pub fn request_body(&self, request: &GenerationRequest) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.meta_prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions response.
pub(crate) fn parse_completion(body: &Value) -> Result<String, GenerationError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GenerationError::Transport("response has no choices".into()))?;
    if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
        return Err(GenerationError::ProviderRefusal("content filtered".into()));
    }
    let message = choice
        .get("message")
        .ok_or_else(|| GenerationError::Transport("choice has no message".into()))?;
    if let Some(refusal) = message.get("refusal").and_then(Value::as_str) {
        return Err(GenerationError::ProviderRefusal(refusal.to_string()));
    }
    let content = match message.get("content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => {
            return Err(GenerationError::Transport(format!(
                "message content is not a string: {other}"
            )))
        }
    };
    if content.trim().is_empty() {
        return Err(GenerationError::ProviderRefusal("empty completion".into()));
    }
    Ok(content)
}

impl Generator for RemoteGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationOutcome, GenerationError> {
        request.validate()?;
        let started = Instant::now();
        let body = self
            .client
            .post_json(&self.endpoint, &self.request_body(request))
            .map_err(|e| GenerationError::Transport(e.to_string()))?;
        let raw_text = parse_completion(&body)?;
        Ok(GenerationOutcome {
            raw_text,
            latency: started.elapsed(),
            provider_id: self.provider_id.clone(),
        })
    }

    fn provider_id(&self) -> &str {
        &self.provider_id
    }
}
