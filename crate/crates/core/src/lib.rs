//! Evolutionary prompt optimization with a language model as the
//! reproduction operator.
//!
//! A population of text prompts is scored by few-shot classification
//! accuracy of a fixed target model. Each round, parents drawn by softmax
//! roulette are shown to a generator model inside a meta-prompt, the
//! generator writes one new prompt per child, and survivors are sampled
//! from parents and offspring with the best individual always kept.
//!
//! Module map:
//!
//! - [`engine`]: population, selection, and the round loop.
//! - [`metaprompt`]: task descriptions, meta-prompt assembly, prompt extraction.
//! - [`generator`]: the generator interface, a deterministic mock and a
//!   chat-completions adapter.
//! - [`evaluator`]: input rendering, label prediction, fitness, caching.
//! - [`data`]: example loading and k-shot sampling.
//! - [`runner`]: configuration, run logs, checkpoints, resume and reports.

pub mod data;
pub mod engine;
pub mod evaluator;
pub mod generator;
pub mod http;
pub mod metaprompt;
mod par;
pub mod runner;

pub use engine::{
    evolve, Engine, EngineContext, EngineError, EngineOptions, EvolutionConfig, FitnessKind,
    Individual, IndividualId, Population, ReproductionStep, RunRecord,
};
pub use evaluator::{Evaluator, LabeledExample, ScoreVector, TargetModel};
pub use generator::{GenerationOutcome, GenerationRequest, Generator};
pub use metaprompt::{MetaPromptTemplate, TaskSpec};
