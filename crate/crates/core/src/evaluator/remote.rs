use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{EvalError, ScoreVector, TargetModel};
use crate::http::{HttpTransport, JsonClient, ReqwestTransport, RequestLimiter, RetryPolicy, Sleeper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteScorerSettings {
    pub endpoint: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_in_flight: usize,
    /// 0 disables the per-minute cap.
    pub requests_per_minute: usize,
    pub timeout_secs: u64,
}

impl Default for RemoteScorerSettings {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        Self {
            endpoint: "http://localhost:8001/score".into(),
            api_key_env: "PROMPTEVO_SCORER_KEY".into(),
            max_retries: retry.max_retries,
            initial_backoff_ms: retry.initial_backoff_ms,
            max_backoff_ms: retry.max_backoff_ms,
            max_in_flight: 8,
            requests_per_minute: 0,
            timeout_secs: 60,
        }
    }
}

/// Target model behind an HTTP scoring service.
///
/// Request: `{"rendered_text": "...", "candidate_words": ["negative", "positive"]}`.
/// Response: `{"log_probs": [-0.3, -1.4]}`, aligned with `candidate_words`.
#[derive(Debug)]
pub struct RemoteScorer {
    endpoint: String,
    client: JsonClient,
}

impl RemoteScorer {
    pub fn new(
        settings: &RemoteScorerSettings,
        transport: Arc<dyn HttpTransport>,
        credential: Option<String>,
    ) -> Self {
        let retry = RetryPolicy {
            max_retries: settings.max_retries,
            initial_backoff_ms: settings.initial_backoff_ms,
            max_backoff_ms: settings.max_backoff_ms,
        };
        let limiter = RequestLimiter::per_minute(settings.max_in_flight, settings.requests_per_minute);
        Self {
            endpoint: settings.endpoint.clone(),
            client: JsonClient::new(transport, retry, limiter, credential),
        }
    }

    pub fn from_env(settings: &RemoteScorerSettings) -> Result<Self, EvalError> {
        let transport = ReqwestTransport::new(Duration::from_secs(settings.timeout_secs))
            .map_err(|e| EvalError::TargetUnavailable(e.0))?;
        let credential = std::env::var(&settings.api_key_env).ok();
        Ok(Self::new(settings, Arc::new(transport), credential))
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.client = self.client.with_sleeper(sleeper);
        self
    }
}

pub(crate) fn parse_log_probs(body: &Value, expected: usize) -> Result<ScoreVector, EvalError> {
    let arr = body
        .get("log_probs")
        .and_then(Value::as_array)
        .ok_or_else(|| EvalError::InvalidScores("response has no log_probs array".into()))?;
    let values = arr
        .iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| EvalError::InvalidScores(format!("log_prob {v} is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let scores = ScoreVector(values);
    scores.validate(expected)?;
    Ok(scores)
}

impl TargetModel for RemoteScorer {
    fn score(&self, rendered: &str, candidate_words: &[String]) -> Result<ScoreVector, EvalError> {
        let body = json!({
            "rendered_text": rendered,
            "candidate_words": candidate_words,
        });
        let resp = self
            .client
            .post_json(&self.endpoint, &body)
            .map_err(|e| EvalError::TargetUnavailable(e.to_string()))?;
        parse_log_probs(&resp, candidate_words.len())
    }
}
