use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::RunError;
use crate::engine::EngineState;
use crate::evaluator::CacheEntry;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const VERSION: u32 = 1;

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RunConfig,
    pub state: EngineState,
    pub cache: Vec<CacheEntry>,
    pub dataset_fingerprint: String,
    /// Lines of `log.jsonl` that belong to the checkpointed rounds.
    pub log_records: u64,
    pub event_records: u64,
    pub completed: bool,
}

impl Checkpoint {
    pub fn new(
        config: RunConfig,
        state: EngineState,
        cache: Vec<CacheEntry>,
        dataset_fingerprint: String,
        log_records: u64,
        event_records: u64,
        completed: bool,
    ) -> Self {
        Self {
            version: VERSION,
            config,
            state,
            cache,
            dataset_fingerprint,
            log_records,
            event_records,
            completed,
        }
    }

    /// Writes to a temporary file and renames it over the old checkpoint.
    pub fn save(&self, dir: &Path) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| RunError::Io(e.to_string()))?;
        let tmp = dir.join(format!("{CHECKPOINT_FILE}.tmp"));
        let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", tmp.display()));
        std::fs::write(&tmp, text).map_err(io)?;
        std::fs::rename(&tmp, dir.join(CHECKPOINT_FILE)).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        let cp: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| RunError::CorruptCheckpoint(format!("{}: {e}", path.display())))?;
        if cp.version != VERSION {
            return Err(RunError::CorruptCheckpoint(format!(
                "unsupported checkpoint version {}",
                cp.version
            )));
        }
        if cp.log_records != u64::from(cp.state.round) + 1 {
            return Err(RunError::CorruptCheckpoint(format!(
                "round {} does not match {} log records",
                cp.state.round, cp.log_records
            )));
        }
        Ok(cp)
    }
}
