//! Generator interface: turns a meta-prompt into raw completion text.

mod mock;
mod remote;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{mock_mutate, mutate_prompt, EditKind, MockGenerator, Mutation};
pub use remote::{RemoteGenerator, RemoteGeneratorSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    /// Network or provider failure that survived the retry budget.
    #[error("transport error: {0}")]
    Transport(String),
    /// Empty or policy-blocked completion.
    #[error("provider refused: {0}")]
    ProviderRefusal(String),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub meta_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Retry index for this child; 0 on the first call.
    pub attempt: u32,
    /// Randomness for deterministic generators, keyed by (seed, round, child, attempt).
    pub entropy: u64,
    /// Parent prompts in draw order. Remote adapters see them only through
    /// the meta-prompt.
    pub parents: Vec<String>,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.meta_prompt.is_empty() {
            return Err(GenerationError::InvalidRequest("meta_prompt is empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GenerationError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GenerationError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    /// Completion text exactly as returned.
    pub raw_text: String,
    pub latency: Duration,
    pub provider_id: String,
}

pub trait Generator: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationOutcome, GenerationError>;

    fn provider_id(&self) -> &str;
}
