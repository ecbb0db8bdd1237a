//! Orchestration for end users: config loading, run directories, logs,
//! checkpoints, resume and reports.
//!
//! A run directory `<output_dir>/<UTC timestamp>-<config hash>` holds
//! `effective_config.toml`, `log.jsonl`, `generations.jsonl` and
//! `checkpoint.json`.

mod checkpoint;
pub mod config;
pub mod log;
pub mod report;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde_json::json;
use thiserror::Error;

pub use checkpoint::{Checkpoint, CHECKPOINT_FILE};
pub use config::RunConfig;
pub use log::{JsonlSink, EVENTS_FILE, LOG_FILE};
pub use report::{report, ReportSummary};

use crate::data::{load_examples, sample_k_shot, synthetic_examples, DataError, FewShotDataset};
use crate::engine::{
    elite_index, Engine, EngineContext, EngineError, EngineOptions, EngineState, FitnessKind,
    RecordSink,
};
use crate::evaluator::{EvalError, Evaluator, KeywordOracle, RemoteScorer, TargetModel};
use crate::generator::{Generator, MockGenerator, RemoteGenerator};
use crate::metaprompt::TaskSpec;
use config::{DataSource, EvaluatorKind, GeneratorKind};

pub const CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("provider: {0}")]
    Provider(String),
    #[error("engine: {0}")]
    Engine(String),
    #[error("dataset fingerprint {found} does not match checkpoint {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("invalid log: {0}")]
    InvalidLog(String),
    #[error("empty log: {0}")]
    EmptyLog(String),
}

impl RunError {
    pub fn category(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Io(_) => "io",
            RunError::Data(_) => "data",
            RunError::Provider(_) => "provider",
            RunError::Engine(_) => "engine",
            RunError::FingerprintMismatch { .. } => "fingerprint_mismatch",
            RunError::CorruptCheckpoint(_) => "corrupt_checkpoint",
            RunError::InvalidLog(_) => "invalid_log",
            RunError::EmptyLog(_) => "empty_log",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io(_) => 3,
            RunError::Data(_) => 4,
            RunError::Provider(_) => 5,
            RunError::FingerprintMismatch { .. } => 6,
            RunError::CorruptCheckpoint(_) => 7,
            RunError::InvalidLog(_) => 8,
            RunError::EmptyLog(_) => 9,
            RunError::Engine(_) => 10,
        }
    }

    /// `{"error": <category>, "message": <text>}`
    pub fn to_json(&self) -> String {
        json!({"error": self.category(), "message": self.to_string()}).to_string()
    }
}

impl From<EngineError> for RunError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Generation(g) => RunError::Provider(g.to_string()),
            EngineError::Evaluation(EvalError::EmptyDataset) => RunError::Engine(e.to_string()),
            EngineError::Evaluation(v) => RunError::Provider(v.to_string()),
            EngineError::InvalidConfig(m) => RunError::Config(m),
            EngineError::Sink(s) => RunError::Io(s.0),
            other => RunError::Engine(other.to_string()),
        }
    }
}

/// Runtime controls that are not part of the experiment definition.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Checked between rounds; when set, the run checkpoints and returns.
    pub stop: Option<Arc<AtomicBool>>,
    /// Stop once this round has completed.
    pub stop_after_round: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub round: u32,
    pub rounds: u32,
    pub completed: bool,
    pub best_prompt: String,
    pub best_fitness: f64,
    pub fitness_kind: FitnessKind,
}

/// The task, data and models a config describes.
pub struct Stack {
    pub task: TaskSpec,
    pub dataset: FewShotDataset,
    pub generator: Box<dyn Generator>,
    pub evaluator: Evaluator,
}

pub fn build_dataset(config: &RunConfig, task: &TaskSpec) -> Result<FewShotDataset, RunError> {
    let d = &config.data;
    match d.source {
        DataSource::Synthetic => {
            let pool = synthetic_examples(task, d.synthetic_per_class, d.seed);
            Ok(sample_k_shot(&pool, task, d.k, d.seed)?)
        }
        DataSource::File => {
            let path = d
                .train_path
                .as_ref()
                .ok_or_else(|| RunError::Config("data.train_path is required".into()))?;
            let pool = load_examples(path, d.format, task)?;
            let ds = sample_k_shot(&pool, task, d.k, d.seed)?;
            match &d.test_path {
                Some(p) => Ok(ds.with_test(load_examples(p, d.format, task)?)),
                None => Ok(ds),
            }
        }
    }
}

pub fn build_stack(config: &RunConfig) -> Result<Stack, RunError> {
    config.validate()?;
    let task = config.task.resolve()?;
    let dataset = build_dataset(config, &task)?;
    let generator: Box<dyn Generator> = match config.generator.kind {
        GeneratorKind::Mock => Box::new(MockGenerator::new(
            &config.generator.mock.pool,
            &config.generator.mock.edits,
        )),
        GeneratorKind::Remote => Box::new(
            RemoteGenerator::from_env(&config.generator.remote)
                .map_err(|e| RunError::Provider(e.to_string()))?,
        ),
    };
    let target: Arc<dyn TargetModel> = match config.evaluator.kind {
        EvaluatorKind::KeywordOracle => {
            let all: Vec<_> = dataset.train.iter().chain(&dataset.test).cloned().collect();
            Arc::new(KeywordOracle::new(&config.evaluator.oracle.keywords, &task, &all))
        }
        EvaluatorKind::Remote => Arc::new(
            RemoteScorer::from_env(&config.evaluator.remote)
                .map_err(|e| RunError::Provider(e.to_string()))?,
        ),
    };
    let evaluator =
        Evaluator::new(target, task.clone()).with_concurrency(config.evaluator.concurrency);
    Ok(Stack {
        task,
        dataset,
        generator,
        evaluator,
    })
}

fn engine_options(config: &RunConfig) -> EngineOptions {
    EngineOptions {
        temperature: config.generator.temperature,
        max_tokens: config.generator.max_tokens,
        test_eval_every: config.run.test_eval_every,
        record_wall_time: config.run.record_wall_time,
        generation_concurrency: config.generator.concurrency,
    }
}

fn io_err(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

fn create_run_dir(config: &RunConfig) -> Result<PathBuf, RunError> {
    let parent = &config.run.output_dir;
    std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    let stem = format!(
        "{}-{}",
        chrono::Utc::now().format("%Y%m%dT%H%M%SZ"),
        config.short_hash()?
    );
    for n in 0u32.. {
        let dir = if n == 0 {
            parent.join(&stem)
        } else {
            parent.join(format!("{stem}-{n}"))
        };
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(&dir, e)),
        }
    }
    unreachable!()
}

/// Loads a config file, applies overrides and runs it.
pub fn run(config_path: &Path, overrides: &[String], options: &RunOptions) -> Result<RunSummary, RunError> {
    let config = RunConfig::load(config_path, overrides)?;
    run_config(config, options)
}

/// Starts a fresh run in a new directory under `config.run.output_dir`.
/// Relative paths in `config` are taken relative to the working directory.
pub fn run_config(config: RunConfig, options: &RunOptions) -> Result<RunSummary, RunError> {
    let mut config = config.effective()?;
    let cwd = std::env::current_dir().map_err(|e| RunError::Io(e.to_string()))?;
    config.resolve_paths(&cwd);
    let stack = build_stack(&config)?;
    let run_dir = create_run_dir(&config)?;
    let cfg_path = run_dir.join(CONFIG_FILE);
    std::fs::write(&cfg_path, config.to_toml()?).map_err(|e| io_err(&cfg_path, e))?;
    ::log::info!(
        "run directory {}; {} train / {} test examples",
        run_dir.display(),
        stack.dataset.train.len(),
        stack.dataset.test.len()
    );
    let mut sink = JsonlSink::open(&run_dir, 0, 0).map_err(|e| io_err(&run_dir, e))?;
    execute(&config, &stack, &run_dir, None, &mut sink, options)
}

/// Continues the run a checkpoint belongs to. The log is cut back to the
/// checkpointed round first, so rounds logged after it are redone.
pub fn resume(checkpoint_path: &Path, options: &RunOptions) -> Result<RunSummary, RunError> {
    let cp = Checkpoint::load(checkpoint_path)?;
    let run_dir = checkpoint_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    if cp.completed {
        ::log::info!("run already complete at round {}", cp.state.round);
        return summarize(&run_dir, &cp.state, &cp.config, true);
    }
    let stack = build_stack(&cp.config)?;
    if stack.dataset.fingerprint != cp.dataset_fingerprint {
        return Err(RunError::FingerprintMismatch {
            expected: cp.dataset_fingerprint,
            found: stack.dataset.fingerprint,
        });
    }
    log::truncate_lines(&run_dir.join(LOG_FILE), cp.log_records)?;
    log::truncate_lines(&run_dir.join(EVENTS_FILE), cp.event_records)?;
    stack.evaluator.cache().restore(cp.cache);
    let mut sink = JsonlSink::open(&run_dir, cp.log_records, cp.event_records)
        .map_err(|e| io_err(&run_dir, e))?;
    execute(&cp.config, &stack, &run_dir, Some(cp.state), &mut sink, options)
}

fn summarize(run_dir: &Path, state: &EngineState, config: &RunConfig, completed: bool) -> Result<RunSummary, RunError> {
    let kind = config.evolution.fitness_kind;
    let best = &state.population.members[elite_index(&state.population.members, kind)?];
    Ok(RunSummary {
        run_dir: run_dir.to_path_buf(),
        round: state.round,
        rounds: config.evolution.rounds,
        completed,
        best_prompt: best.prompt_text().to_string(),
        best_fitness: best.require_fitness()?,
        fitness_kind: kind,
    })
}

fn execute(
    config: &RunConfig,
    stack: &Stack,
    run_dir: &Path,
    state: Option<EngineState>,
    sink: &mut JsonlSink,
    options: &RunOptions,
) -> Result<RunSummary, RunError> {
    let ctx = EngineContext {
        task: &stack.task,
        template: &config.metaprompt,
        generator: stack.generator.as_ref(),
        evaluator: &stack.evaluator,
        train: stack.dataset.train_set(),
        test: stack.dataset.test_set(),
    };
    let save = |engine: &Engine<'_>, sink: &JsonlSink| {
        Checkpoint::new(
            config.clone(),
            engine.state(),
            stack.evaluator.cache().entries(),
            stack.dataset.fingerprint.clone(),
            sink.records(),
            sink.event_lines(),
            engine.is_finished(),
        )
        .save(run_dir)
    };
    let mut engine = match state {
        Some(state) => Engine::from_state(config.evolution.clone(), ctx, engine_options(config), state)?,
        None => {
            let mut engine = Engine::new(config.evolution.clone(), ctx, engine_options(config))?;
            let out = engine.start()?;
            sink.emit(&out.record, &out.events).map_err(EngineError::from)?;
            save(&engine, sink)?;
            engine
        }
    };
    while !engine.is_finished() {
        let stop_requested = options.stop.as_ref().is_some_and(|s| s.load(Ordering::SeqCst));
        if stop_requested || options.stop_after_round.is_some_and(|r| engine.round() >= r) {
            ::log::info!("stopping after round {}", engine.round());
            break;
        }
        let out = match engine.step() {
            Ok(out) => out,
            Err(e) => {
                // the engine is still at the last completed round
                save(&engine, sink)?;
                return Err(e.into());
            }
        };
        sink.emit(&out.record, &out.events).map_err(EngineError::from)?;
        let r = &out.record;
        ::log::info!(
            "round {}: best {:.4} mean {:.4} failures {}",
            r.round,
            r.best_train_fitness,
            r.mean_train_fitness,
            r.extraction_failures
        );
        if engine.round() % config.run.checkpoint_every == 0 {
            save(&engine, sink)?;
        }
    }
    save(&engine, sink)?;
    summarize(run_dir, &engine.state(), config, engine.is_finished())
}
