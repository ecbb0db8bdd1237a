//! Append-only JSON-lines files of a run directory.
//!
//! `log.jsonl` holds one [`RunRecord`] per line with the fields `round`,
//! `best_train_fitness`, `mean_train_fitness`, `best_prompt_text`,
//! `generation_calls`, `extraction_failures`, `cache_hits`, `wall_time_ms`
//! and, on test-evaluation rounds, `best_test_fitness`.
//! `generations.jsonl` holds one [`GenerationEvent`] per generate call.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use super::RunError;
use crate::engine::{GenerationEvent, RecordSink, RunRecord, SinkError};

pub const LOG_FILE: &str = "log.jsonl";
pub const EVENTS_FILE: &str = "generations.jsonl";

/// Writes each record as one line, flushed before `emit` returns.
#[derive(Debug)]
pub struct JsonlSink {
    log: File,
    events: File,
    records: u64,
    event_lines: u64,
}

impl JsonlSink {
    /// Opens both files for appending. `records` and `event_lines` are the
    /// line counts already present.
    pub fn open(dir: &Path, records: u64, event_lines: u64) -> std::io::Result<Self> {
        let open = |name| OpenOptions::new().create(true).append(true).open(dir.join(name));
        Ok(Self {
            log: open(LOG_FILE)?,
            events: open(EVENTS_FILE)?,
            records,
            event_lines,
        })
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn event_lines(&self) -> u64 {
        self.event_lines
    }
}

fn to_line<T: serde::Serialize>(value: &T) -> Result<String, SinkError> {
    let mut line = serde_json::to_string(value).map_err(|e| SinkError(e.to_string()))?;
    line.push('\n');
    Ok(line)
}

impl RecordSink for JsonlSink {
    fn emit(&mut self, record: &RunRecord, events: &[GenerationEvent]) -> Result<(), SinkError> {
        // events first, so a logged round always has its events on disk
        if !events.is_empty() {
            let mut buf = String::new();
            for e in events {
                buf.push_str(&to_line(e)?);
            }
            self.events.write_all(buf.as_bytes())?;
            self.events.flush()?;
            self.event_lines += events.len() as u64;
        }
        self.log.write_all(to_line(record)?.as_bytes())?;
        self.log.flush()?;
        self.records += 1;
        Ok(())
    }
}

/// Cuts `path` down to its first `keep` complete lines, dropping any
/// partial trailing line. Fails if fewer than `keep` lines exist.
pub fn truncate_lines(path: &Path, keep: u64) -> Result<(), RunError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound && keep == 0 => return Ok(()),
        Err(e) => return Err(RunError::Io(format!("{}: {e}", path.display()))),
    };
    let mut seen = 0u64;
    let mut cut = 0usize;
    if keep > 0 {
        for (i, b) in bytes.iter().enumerate() {
            if *b == b'\n' {
                seen += 1;
                if seen == keep {
                    cut = i + 1;
                    break;
                }
            }
        }
        if seen < keep {
            return Err(RunError::CorruptCheckpoint(format!(
                "{} has {seen} complete lines, checkpoint expects {keep}",
                path.display()
            )));
        }
    }
    if cut < bytes.len() {
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        f.set_len(cut as u64)
            .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// Parses a run log. A final line without its newline is a write cut short
/// by a crash and is ignored if it does not parse.
pub fn read_log(path: &Path) -> Result<Vec<RunRecord>, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out: Vec<RunRecord> = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord>(line) {
            Ok(r) => {
                if let Some(prev) = out.last() {
                    if r.round <= prev.round {
                        return Err(RunError::InvalidLog(format!(
                            "{} line {}: round {} does not follow round {}",
                            path.display(),
                            i + 1,
                            r.round,
                            prev.round
                        )));
                    }
                }
                out.push(r);
            }
            Err(_) if i + 1 == lines.len() && !complete => {}
            Err(e) => {
                return Err(RunError::InvalidLog(format!("{} line {}: {e}", path.display(), i + 1)))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(round: u32) -> RunRecord {
        RunRecord {
            round,
            best_train_fitness: 0.5,
            mean_train_fitness: 0.5,
            best_prompt_text: "p".into(),
            generation_calls: 0,
            extraction_failures: 0,
            cache_hits: 0,
            wall_time_ms: 0,
            best_test_fitness: None,
        }
    }

    #[test]
    fn sink_appends_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = JsonlSink::open(dir.path(), 0, 0).unwrap();
        sink.emit(&record(0), &[]).unwrap();
        sink.emit(&record(1), &[]).unwrap();
        assert_eq!(sink.records(), 2);
        let back = read_log(&dir.path().join(LOG_FILE)).unwrap();
        assert_eq!(back, vec![record(0), record(1)]);
    }

    #[test]
    fn partial_tail_is_ignored_then_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(LOG_FILE);
        let mut text = String::new();
        for r in 0..3 {
            text.push_str(&serde_json::to_string(&record(r)).unwrap());
            text.push('\n');
        }
        text.push_str("{\"round\":3,\"best_tr");
        std::fs::write(&p, &text).unwrap();
        assert_eq!(read_log(&p).unwrap().len(), 3);
        truncate_lines(&p, 2).unwrap();
        let after = std::fs::read_to_string(&p).unwrap();
        assert_eq!(after.lines().count(), 2);
        assert!(after.ends_with('\n'));
        assert!(matches!(truncate_lines(&p, 5), Err(RunError::CorruptCheckpoint(_))));
    }

    #[test]
    fn malformed_or_unordered_logs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(LOG_FILE);
        std::fs::write(&p, "garbage\n").unwrap();
        assert!(matches!(read_log(&p), Err(RunError::InvalidLog(_))));
        let line = |r| serde_json::to_string(&record(r)).unwrap();
        std::fs::write(&p, format!("{}\n{}\n", line(1), line(1))).unwrap();
        assert!(matches!(read_log(&p), Err(RunError::InvalidLog(_))));
    }
}
