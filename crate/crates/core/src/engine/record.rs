use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::IndividualId;

/// One line of the run log, written after each completed round. Round 0 is
/// the evaluated initial population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub round: u32,
    pub best_train_fitness: f64,
    pub mean_train_fitness: f64,
    pub best_prompt_text: String,
    pub generation_calls: u64,
    pub extraction_failures: u64,
    pub cache_hits: u64,
    pub wall_time_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_test_fitness: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStatus {
    Ok,
    ExtractionFailure,
    Refusal,
}

/// A single generate call and what came of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationEvent {
    pub round: u32,
    pub child: usize,
    pub attempt: u32,
    pub parent_ids: Vec<IndividualId>,
    pub status: GenerationStatus,
    pub provider_id: String,
    pub latency_ms: u64,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Debug, Error)]
#[error("record sink failed: {0}")]
pub struct SinkError(pub String);

impl From<std::io::Error> for SinkError {
    fn from(e: std::io::Error) -> Self {
        SinkError(e.to_string())
    }
}

/// Receives each finished round. `events` holds every generate call of the
/// round in child-slot order.
pub trait RecordSink {
    fn emit(&mut self, record: &RunRecord, events: &[GenerationEvent]) -> Result<(), SinkError>;
}

#[derive(Debug, Default, Clone)]
pub struct VecSink {
    pub records: Vec<RunRecord>,
    pub events: Vec<GenerationEvent>,
}

impl RecordSink for VecSink {
    fn emit(&mut self, record: &RunRecord, events: &[GenerationEvent]) -> Result<(), SinkError> {
        self.records.push(record.clone());
        self.events.extend_from_slice(events);
        Ok(())
    }
}
