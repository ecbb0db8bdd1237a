//! Example ingestion and seeded k-shot sampling.
//!
//! Column mapping is taken from the task: SST-2 reads `sentence`/`label`,
//! RTE reads `sentence1`/`sentence2`/`label`, AG's News reads `text`/`label`.
//! Label cells may hold either the label id (`0`, `1`, ...) or the label word.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluator::{EvalSet, LabeledExample, Segment};
use crate::metaprompt::TaskSpec;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: unknown label {value:?}")]
    UnknownLabel { line: u64, value: String },
    #[error("class {class:?} has {have} examples, need {need}")]
    InsufficientClassExamples {
        class: String,
        have: usize,
        need: usize,
    },
    #[error("k must be positive")]
    InvalidK,
    #[error("cannot infer data format of {0}; set it explicitly")]
    UnknownFormat(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    /// One JSON object per line.
    #[serde(rename = "jsonl")]
    JsonLines,
    /// Comma-separated with a header row.
    #[serde(rename = "csv")]
    Csv,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Some(DataFormat::JsonLines),
            "csv" => Some(DataFormat::Csv),
            _ => None,
        }
    }
}

fn label_index(task: &TaskSpec, value: &str) -> Option<usize> {
    let value = value.trim();
    task.labels
        .iter()
        .position(|l| l.id == value)
        .or_else(|| task.labels.iter().position(|l| l.word == value))
}

fn build_example(
    task: &TaskSpec,
    line: u64,
    cell: &dyn Fn(&str) -> Option<String>,
) -> Result<LabeledExample, DataError> {
    let mut segments = Vec::with_capacity(task.columns.len());
    for column in &task.columns {
        let text = cell(column).ok_or_else(|| DataError::Parse {
            line,
            message: format!("missing text column {column:?}"),
        })?;
        if text.trim().is_empty() {
            return Err(DataError::Parse {
                line,
                message: format!("column {column:?} is empty"),
            });
        }
        segments.push(Segment {
            name: column.clone(),
            text,
        });
    }
    let raw_label = cell(&task.label_column).ok_or_else(|| DataError::Parse {
        line,
        message: format!("missing label column {:?}", task.label_column),
    })?;
    let label = label_index(task, &raw_label).ok_or(DataError::UnknownLabel {
        line,
        value: raw_label,
    })?;
    Ok(LabeledExample { segments, label })
}

pub fn parse_jsonl(text: &str, task: &TaskSpec) -> Result<Vec<LabeledExample>, DataError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i as u64 + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let obj: Value = serde_json::from_str(raw).map_err(|e| DataError::Parse {
            line,
            message: e.to_string(),
        })?;
        let obj = obj.as_object().ok_or_else(|| DataError::Parse {
            line,
            message: "expected a JSON object".into(),
        })?;
        let cell = |key: &str| -> Option<String> {
            match obj.get(key)? {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                Value::Bool(b) => Some(b.to_string()),
                _ => None,
            }
        };
        out.push(build_example(task, line, &cell)?);
    }
    Ok(out)
}

pub fn parse_csv(text: &str, task: &TaskSpec) -> Result<Vec<LabeledExample>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |key: &str| -> Option<String> {
            let idx = headers.iter().position(|h| h == key)?;
            record.get(idx).map(str::to_string)
        };
        out.push(build_example(task, line, &cell)?);
    }
    Ok(out)
}

/// Loads examples in file order. An empty file gives an empty list.
pub fn load_examples(
    path: &Path,
    format: Option<DataFormat>,
    task: &TaskSpec,
) -> Result<Vec<LabeledExample>, DataError> {
    let format = format
        .or_else(|| DataFormat::from_path(path))
        .ok_or_else(|| DataError::UnknownFormat(path.to_path_buf()))?;
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        DataFormat::JsonLines => parse_jsonl(&text, task),
        DataFormat::Csv => parse_csv(&text, task),
    }
}

fn canonical_lines<'a>(split: &'a str, examples: &'a [LabeledExample]) -> impl Iterator<Item = String> + 'a {
    examples.iter().map(move |ex| {
        // serde_json maps keep keys sorted
        json!({
            "label": ex.label,
            "segments": ex.segments.iter().map(|s| json!({"name": s.name, "text": s.text})).collect::<Vec<_>>(),
            "split": split,
        })
        .to_string()
    })
}

/// Lowercase hex SHA-256 of the newline-joined canonical records.
pub fn fingerprint(splits: &[(&str, &[LabeledExample])]) -> String {
    let lines: Vec<String> = splits
        .iter()
        .flat_map(|(name, ex)| canonical_lines(name, ex))
        .collect();
    hex::encode(Sha256::digest(lines.join("\n").as_bytes()))
}

/// k labeled examples per class for fitness, plus a disjoint test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotDataset {
    pub k: usize,
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub fingerprint: String,
    pub train_fingerprint: String,
    pub test_fingerprint: String,
}

impl FewShotDataset {
    fn assemble(k: usize, train: Vec<LabeledExample>, test: Vec<LabeledExample>) -> Self {
        Self {
            fingerprint: fingerprint(&[("train", &train), ("test", &test)]),
            train_fingerprint: fingerprint(&[("train", &train)]),
            test_fingerprint: fingerprint(&[("test", &test)]),
            k,
            train,
            test,
        }
    }

    /// Replaces the test split, dropping any example that also appears in train.
    pub fn with_test(self, test: Vec<LabeledExample>) -> Self {
        let seen: HashSet<&LabeledExample> = self.train.iter().collect();
        let test = test.into_iter().filter(|ex| !seen.contains(ex)).collect();
        Self::assemble(self.k, self.train, test)
    }

    pub fn train_set(&self) -> EvalSet<'_> {
        EvalSet {
            examples: &self.train,
            fingerprint: &self.train_fingerprint,
        }
    }

    pub fn test_set(&self) -> Option<EvalSet<'_>> {
        (!self.test.is_empty()).then(|| EvalSet {
            examples: &self.test,
            fingerprint: &self.test_fingerprint,
        })
    }
}

/// Draws `k` distinct examples per class, uniformly without replacement,
/// from a stream derived from `(seed, class index)`. Train is grouped by
/// class in label order; everything not drawn becomes the test split.
pub fn sample_k_shot(
    examples: &[LabeledExample],
    task: &TaskSpec,
    k: usize,
    seed: u64,
) -> Result<FewShotDataset, DataError> {
    if k == 0 {
        return Err(DataError::InvalidK);
    }
    let mut chosen: HashSet<&LabeledExample> = HashSet::new();
    let mut train = Vec::with_capacity(k * task.labels.len());
    for (class, label) in task.labels.iter().enumerate() {
        let mut seen = HashSet::new();
        let mut pool: Vec<&LabeledExample> = examples
            .iter()
            .filter(|ex| ex.label == class && seen.insert(*ex))
            .collect();
        if pool.len() < k {
            return Err(DataError::InsufficientClassExamples {
                class: label.word.clone(),
                have: pool.len(),
                need: k,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64 + 1);
        for i in 0..k {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        for ex in &pool[..k] {
            chosen.insert(ex);
            train.push((*ex).clone());
        }
    }
    let test = examples
        .iter()
        .filter(|ex| !chosen.contains(ex))
        .cloned()
        .collect();
    Ok(FewShotDataset::assemble(k, train, test))
}

const OPENERS: [&str; 8] = [
    "the film", "this movie", "the story", "the cast", "the script", "the ending", "the score",
    "the pacing",
];
const VERBS: [&str; 6] = ["felt", "seemed", "was", "turned out", "came across as", "stayed"];
const ADJECTIVES: [&str; 10] = [
    "warm", "flat", "bright", "tedious", "moving", "clumsy", "sharp", "hollow", "tender", "messy",
];

/// Deterministic filler examples, `per_class` for every label of `task`.
/// Texts are distinct; pair tasks get two segments.
pub fn synthetic_examples(task: &TaskSpec, per_class: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * task.labels.len());
    let sentence = |rng: &mut ChaCha8Rng, n: usize| {
        format!(
            "{} {} {} in scene {n}",
            OPENERS[rng.gen_range(0..OPENERS.len())],
            VERBS[rng.gen_range(0..VERBS.len())],
            ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())],
        )
    };
    for i in 0..per_class {
        for (class, _) in task.labels.iter().enumerate() {
            let n = i * task.labels.len() + class;
            let segments = task
                .columns
                .iter()
                .map(|c| Segment {
                    name: c.clone(),
                    text: sentence(&mut rng, n),
                })
                .collect();
            out.push(LabeledExample {
                segments,
                label: class,
            });
        }
    }
    out
}

/// Writes examples as JSON lines using the task's column names.
pub fn to_jsonl(examples: &[LabeledExample], task: &TaskSpec) -> String {
    let mut out = String::new();
    for ex in examples {
        let mut obj = serde_json::Map::new();
        for s in &ex.segments {
            obj.insert(s.name.clone(), Value::String(s.text.clone()));
        }
        obj.insert(
            task.label_column.clone(),
            Value::String(task.labels[ex.label].id.clone()),
        );
        out.push_str(&Value::Object(obj).to_string());
        out.push('\n');
    }
    out
}
