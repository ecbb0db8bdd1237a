//! JSON-over-HTTP plumbing shared by the remote generator and scorer:
//! a swappable transport, bounded retries with exponential backoff, and a
//! limiter for in-flight requests and per-window request starts.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Connection-level failure (refused, reset, timed out).
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct TransportFailure(pub String);

pub trait HttpTransport: Send + Sync {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> Result<HttpResponse, TransportFailure>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportFailure> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportFailure(e.to_string()))?;
        Ok(Self { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> Result<HttpResponse, TransportFailure> {
        let mut req = self.client.post(url).body(body.to_string());
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let resp = req.send().map_err(|e| TransportFailure(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportFailure(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): doubling from the
    /// initial backoff, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(63)).unwrap_or(u64::MAX);
        Duration::from_millis(
            self.initial_backoff_ms
                .saturating_mul(factor)
                .min(self.max_backoff_ms),
        )
    }
}

#[derive(Debug, Default)]
struct LimiterState {
    in_flight: usize,
    starts: VecDeque<Instant>,
}

/// Caps concurrent requests and request starts per window (0 disables a cap).
#[derive(Debug)]
pub struct RequestLimiter {
    max_in_flight: usize,
    per_window: usize,
    window: Duration,
    state: Mutex<LimiterState>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a RequestLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.limiter.state.lock().expect("limiter lock poisoned");
        st.in_flight -= 1;
        self.limiter.freed.notify_all();
    }
}

impl RequestLimiter {
    pub fn new(max_in_flight: usize, per_window: usize, window: Duration) -> Self {
        Self {
            max_in_flight,
            per_window,
            window,
            state: Mutex::new(LimiterState::default()),
            freed: Condvar::new(),
        }
    }

    pub fn per_minute(max_in_flight: usize, requests_per_minute: usize) -> Self {
        Self::new(max_in_flight, requests_per_minute, Duration::from_secs(60))
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("limiter lock poisoned");
        loop {
            let now = Instant::now();
            while st
                .starts
                .front()
                .is_some_and(|&t| now.duration_since(t) >= self.window)
            {
                st.starts.pop_front();
            }
            let slot_free = self.max_in_flight == 0 || st.in_flight < self.max_in_flight;
            let rate_free = self.per_window == 0 || st.starts.len() < self.per_window;
            if slot_free && rate_free {
                st.in_flight += 1;
                if self.per_window > 0 {
                    st.starts.push_back(now);
                }
                return Permit { limiter: self };
            }
            let wait = if rate_free {
                Duration::from_secs(1)
            } else {
                let oldest = *st.starts.front().expect("rate-limited implies a start");
                (oldest + self.window).saturating_duration_since(now)
            };
            st = self
                .freed
                .wait_timeout(st, wait.max(Duration::from_millis(1)))
                .expect("limiter lock poisoned")
                .0;
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    #[error("request failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// POSTs JSON bodies and returns parsed JSON, retrying connection failures,
/// 429 and 5xx responses.
pub struct JsonClient {
    transport: Arc<dyn HttpTransport>,
    retry: RetryPolicy,
    limiter: RequestLimiter,
    credential: Option<String>,
    sleeper: Sleeper,
}

impl fmt::Debug for JsonClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JsonClient")
            .field("retry", &self.retry)
            .field("limiter", &self.limiter)
            .field("credential", &self.credential.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl JsonClient {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        retry: RetryPolicy,
        limiter: RequestLimiter,
        credential: Option<String>,
    ) -> Self {
        Self {
            transport,
            retry,
            limiter,
            credential,
            sleeper: Arc::new(std::thread::sleep),
        }
    }

    /// Replaces the backoff sleep (tests use this to skip real waiting).
    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn post_json(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value, ClientError> {
        let payload = body.to_string();
        let mut headers = vec![("content-type".to_string(), "application/json".to_string())];
        if let Some(key) = &self.credential {
            headers.push(("authorization".to_string(), format!("Bearer {key}")));
        }
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.limiter.acquire();
                self.transport.post(url, &headers, &payload)
            };
            let failure = match result {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    return serde_json::from_str(&resp.body)
                        .map_err(|e| ClientError::Decode(e.to_string()));
                }
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    format!("HTTP {}: {}", resp.status, resp.body)
                }
                Ok(resp) => {
                    return Err(ClientError::Status {
                        status: resp.status,
                        body: resp.body,
                    })
                }
                Err(e) => e.0,
            };
            if attempt > self.retry.max_retries {
                return Err(ClientError::Transport {
                    attempts: attempt,
                    message: failure,
                });
            }
            let delay = self.retry.delay(attempt - 1);
            log::warn!("request to {url} failed ({failure}); retrying in {delay:?}");
            (self.sleeper)(delay);
        }
    }
}

/// Test transport that replays scripted responses and records every request.
#[derive(Default)]
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<HttpResponse, TransportFailure>>>,
    pub requests: Mutex<Vec<RecordedRequest>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Result<HttpResponse, TransportFailure>>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn ok(body: impl Into<String>) -> Result<HttpResponse, TransportFailure> {
        Ok(HttpResponse {
            status: 200,
            body: body.into(),
        })
    }

    pub fn push(&self, item: Result<HttpResponse, TransportFailure>) {
        self.script.lock().unwrap().push_back(item);
    }

    pub fn recorded(&self) -> Vec<RecordedRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl HttpTransport for ScriptedTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
    ) -> Result<HttpResponse, TransportFailure> {
        self.requests.lock().unwrap().push(RecordedRequest {
            url: url.into(),
            headers: headers.to_vec(),
            body: body.into(),
        });
        self.script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(TransportFailure("script exhausted".into())))
    }
}
