//! Run configuration: TOML sections, `key=value` overrides and path resolution.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;
use crate::data::DataFormat;
use crate::engine::EvolutionConfig;
use crate::evaluator::RemoteScorerSettings;
use crate::generator::EditKind;
use crate::generator::RemoteGeneratorSettings;
use crate::metaprompt::{LabelSpec, MetaPromptTemplate, TaskSpec};

pub const DEFAULT_POOL: [&str; 10] = [
    "sentiment", "positive", "negative", "review", "emotion", "please", "quickly", "text",
    "answer", "label",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub evolution: EvolutionConfig,
    pub task: TaskSection,
    pub metaprompt: MetaPromptTemplate,
    pub data: DataSection,
    pub generator: GeneratorSection,
    pub evaluator: EvaluatorSection,
    pub run: RunSection,
}

/// A preset plus optional field overrides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub i_task: Option<String>,
    pub labels: Option<Vec<LabelSpec>>,
    pub initial_prompt: Option<String>,
    pub head: Option<String>,
    pub interval: Option<String>,
    pub columns: Option<Vec<String>>,
    pub label_column: Option<String>,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            preset: Some("sst2".into()),
            name: None,
            i_task: None,
            labels: None,
            initial_prompt: None,
            head: None,
            interval: None,
            columns: None,
            label_column: None,
        }
    }
}

impl TaskSection {
    pub fn resolve(&self) -> Result<TaskSpec, RunError> {
        let base = match &self.preset {
            Some(name) => Some(
                TaskSpec::preset(name)
                    .ok_or_else(|| RunError::Config(format!("unknown task preset {name:?}")))?,
            ),
            None => None,
        };
        let missing = |field: &str| RunError::Config(format!("task.{field} is required without a preset"));
        let pick = |own: &Option<String>, from: Option<&String>, field: &str| {
            own.clone().or_else(|| from.cloned()).ok_or_else(|| missing(field))
        };
        let b = base.as_ref();
        let task = TaskSpec {
            name: pick(&self.name, b.map(|t| &t.name), "name")?,
            i_task: pick(&self.i_task, b.map(|t| &t.i_task), "i_task")?,
            labels: self
                .labels
                .clone()
                .or_else(|| b.map(|t| t.labels.clone()))
                .ok_or_else(|| missing("labels"))?,
            initial_prompt: pick(&self.initial_prompt, b.map(|t| &t.initial_prompt), "initial_prompt")?,
            head: self.head.clone().or_else(|| b.map(|t| t.head.clone())).unwrap_or_else(|| "class:".into()),
            interval: self
                .interval
                .clone()
                .or_else(|| b.map(|t| t.interval.clone()))
                .unwrap_or_else(|| "\n".into()),
            columns: self
                .columns
                .clone()
                .or_else(|| b.map(|t| t.columns.clone()))
                .ok_or_else(|| missing("columns"))?,
            label_column: self
                .label_column
                .clone()
                .or_else(|| b.map(|t| t.label_column.clone()))
                .unwrap_or_else(|| "label".into()),
            canonical: false,
        };
        // canonical only while the published strings are untouched
        let task = TaskSpec {
            canonical: b.is_some_and(|t| {
                t.canonical
                    && t.i_task == task.i_task
                    && t.labels == task.labels
                    && t.initial_prompt == task.initial_prompt
                    && t.columns == task.columns
            }),
            ..task
        };
        task.validate().map_err(|e| RunError::Config(e.to_string()))?;
        Ok(task)
    }

    /// Same task with every field spelled out.
    fn expanded(&self) -> Result<Self, RunError> {
        let t = self.resolve()?;
        Ok(Self {
            preset: self.preset.clone(),
            name: Some(t.name),
            i_task: Some(t.i_task),
            labels: Some(t.labels),
            initial_prompt: Some(t.initial_prompt),
            head: Some(t.head),
            interval: Some(t.interval),
            columns: Some(t.columns),
            label_column: Some(t.label_column),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    File,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Pool the k-shot train split is drawn from; leftovers form the test split.
    pub train_path: Option<PathBuf>,
    /// Replaces the leftover test split when given.
    pub test_path: Option<PathBuf>,
    /// Inferred from the file extension when absent.
    pub format: Option<DataFormat>,
    pub k: usize,
    pub seed: u64,
    pub synthetic_per_class: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::File,
            train_path: None,
            test_path: None,
            format: None,
            k: 16,
            seed: 42,
            synthetic_per_class: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSettings {
    /// Words the mock may insert or substitute.
    pub pool: Vec<String>,
    pub edits: Vec<EditKind>,
}

impl Default for MockSettings {
    fn default() -> Self {
        Self {
            pool: DEFAULT_POOL.iter().map(|w| w.to_string()).collect(),
            edits: EditKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub kind: GeneratorKind,
    pub temperature: f64,
    pub max_tokens: u32,
    pub concurrency: usize,
    pub mock: MockSettings,
    pub remote: RemoteGeneratorSettings,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Mock,
            temperature: 1.0,
            max_tokens: 512,
            concurrency: 1,
            mock: MockSettings::default(),
            remote: RemoteGeneratorSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatorKind {
    KeywordOracle,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    pub keywords: Vec<String>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            keywords: DEFAULT_POOL[..5].iter().map(|w| w.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorSection {
    pub kind: EvaluatorKind,
    pub concurrency: usize,
    pub oracle: OracleSettings,
    pub remote: RemoteScorerSettings,
}

impl Default for EvaluatorSection {
    fn default() -> Self {
        Self {
            kind: EvaluatorKind::KeywordOracle,
            concurrency: 1,
            oracle: OracleSettings::default(),
            remote: RemoteScorerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Parent of the per-run directories.
    pub output_dir: PathBuf,
    pub checkpoint_every: u32,
    /// 0 disables test-split evaluation.
    pub test_eval_every: u32,
    /// Off makes logs byte-comparable across runs.
    pub record_wall_time: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs"),
            checkpoint_every: 25,
            test_eval_every: 10,
            record_wall_time: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    /// Reads `path`, applies overrides and resolves relative paths against
    /// the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut value: toml::Table =
            toml::from_str(&text).map_err(|e| RunError::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let mut config: RunConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| RunError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = if base.as_os_str().is_empty() { Path::new(".") } else { base };
        let base = std::path::absolute(base).map_err(|e| RunError::Io(e.to_string()))?;
        config.resolve_paths(&base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.data.train_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.data.test_path.as_mut() {
            fix(p);
        }
        fix(&mut self.run.output_dir);
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Config(m.into()));
        self.evolution
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        self.task.resolve()?;
        self.metaprompt
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        if self.data.k == 0 {
            return bad("data.k must be positive");
        }
        match self.data.source {
            DataSource::File if self.data.train_path.is_none() => {
                return bad("data.train_path is required when data.source = \"file\"")
            }
            DataSource::Synthetic if self.data.synthetic_per_class < self.data.k => {
                return bad("data.synthetic_per_class must be at least data.k")
            }
            _ => {}
        }
        if self.generator.concurrency == 0 || self.evaluator.concurrency == 0 {
            return bad("concurrency must be positive");
        }
        if self.generator.temperature.is_nan() || self.generator.temperature < 0.0 {
            return bad("generator.temperature must be non-negative");
        }
        if self.generator.kind == GeneratorKind::Mock && self.generator.mock.edits.is_empty() {
            return bad("generator.mock.edits must not be empty");
        }
        if self.evaluator.kind == EvaluatorKind::KeywordOracle && self.evaluator.oracle.keywords.is_empty() {
            return bad("evaluator.oracle.keywords must not be empty");
        }
        if self.run.checkpoint_every == 0 {
            return bad("run.checkpoint_every must be positive");
        }
        Ok(())
    }

    /// The config with the task spelled out, as written to `effective_config.toml`.
    pub fn effective(&self) -> Result<Self, RunError> {
        let mut out = self.clone();
        out.task = self.task.expanded()?;
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String, RunError> {
        toml::to_string(self).map_err(|e| RunError::Config(e.to_string()))
    }

    /// First 8 hex digits of the SHA-256 of the serialized config.
    pub fn short_hash(&self) -> Result<String, RunError> {
        let text = self.to_toml()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes()))[..8].to_string())
    }
}

/// Sets a dotted `key=value` in a TOML table. The value is parsed as a TOML
/// literal when possible (`5`, `true`, `[1, 2]`, `"x"`), else taken as a string.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), RunError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| RunError::Config(format!("override {item:?} is not key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(RunError::Config(format!("bad override key {key:?}")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, path) = parts.split_last().expect("non-empty key");
    let mut cursor = table;
    for part in path {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| RunError::Config(format!("override {key:?}: {part:?} is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}
