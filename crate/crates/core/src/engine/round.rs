use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{GenerationEvent, GenerationStatus, RecordSink, RunRecord};
use super::selection::{elite_index, select_parents, survivor_selection};
use super::{EngineError, EvolutionConfig, Individual, IndividualId, Population};
use crate::evaluator::{EvalSet, Evaluator};
use crate::generator::{GenerationError, GenerationRequest, Generator};
use crate::par::map_ordered;
use crate::metaprompt::{build_meta_prompt, extract_prompt, MetaPromptTemplate, TaskSpec};

/// Everything a run reads but never mutates.
pub struct EngineContext<'a> {
    pub task: &'a TaskSpec,
    pub template: &'a MetaPromptTemplate,
    pub generator: &'a dyn Generator,
    pub evaluator: &'a Evaluator,
    pub train: EvalSet<'a>,
    pub test: Option<EvalSet<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Score the best prompt on the test split every this many rounds; 0 disables.
    pub test_eval_every: u32,
    pub record_wall_time: bool,
    /// Concurrent generate calls per round. Output does not depend on it.
    pub generation_concurrency: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_tokens: 512,
            test_eval_every: 10,
            record_wall_time: true,
            generation_concurrency: 1,
        }
    }
}

/// Serializable position of the engine's ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, String> {
        let bytes = hex::decode(&self.seed).map_err(|e| format!("rng seed: {e}"))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| "rng seed must be 32 bytes".to_string())?;
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| format!("rng word_pos: {e}"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

/// Snapshot of a run between rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub round: u32,
    pub population: Population,
    pub next_id: u64,
    pub rng: RngState,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-call generator entropy keyed by position, not by call order, so
/// concurrent generation cannot reorder randomness.
pub fn derive_entropy(seed: u64, round: u32, child: usize, attempt: u32) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ u64::from(round));
    h = splitmix64(h ^ child as u64);
    splitmix64(h ^ u64::from(attempt))
}

/// Result of one round: the log record plus every generate call it made.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub record: RunRecord,
    pub events: Vec<GenerationEvent>,
    /// Evaluated children in slot order, before survivor selection.
    pub offspring: Vec<Individual>,
}

struct ChildResult {
    prompt: Option<String>,
    events: Vec<GenerationEvent>,
    calls: u64,
    failures: u64,
}

pub struct Engine<'a> {
    config: EvolutionConfig,
    ctx: EngineContext<'a>,
    options: EngineOptions,
    round: u32,
    population: Population,
    next_id: u64,
    rng: ChaCha8Rng,
}

impl<'a> Engine<'a> {
    pub fn new(
        config: EvolutionConfig,
        ctx: EngineContext<'a>,
        options: EngineOptions,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let population = Population::initial(&ctx.task.initial_prompt, config.n_pop, 0)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            next_id: config.n_pop as u64,
            config,
            ctx,
            options,
            round: 0,
            population,
            rng,
        })
    }

    pub fn from_state(
        config: EvolutionConfig,
        ctx: EngineContext<'a>,
        options: EngineOptions,
        state: EngineState,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let rng = state.rng.restore().map_err(EngineError::InvalidConfig)?;
        Ok(Self {
            config,
            ctx,
            options,
            round: state.round,
            population: state.population,
            next_id: state.next_id,
            rng,
        })
    }

    pub fn state(&self) -> EngineState {
        EngineState {
            round: self.round,
            population: self.population.clone(),
            next_id: self.next_id,
            rng: RngState::capture(&self.rng),
        }
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.config.rounds
    }

    fn evaluate(&self, members: &mut [Individual]) -> Result<(), EngineError> {
        for m in members.iter_mut().filter(|m| m.fitness().is_none()) {
            let f = self.ctx.evaluator.fitness(
                m.prompt_text(),
                &self.ctx.train,
                self.config.fitness_kind,
            )?;
            m.set_fitness(f)?;
        }
        Ok(())
    }

    /// Evaluates the initial population and returns the round-0 record.
    pub fn start(&mut self) -> Result<RoundOutput, EngineError> {
        let started = Instant::now();
        let hits = self.ctx.evaluator.cache().hits();
        let mut members = self.population.members.clone();
        self.evaluate(&mut members)?;
        self.population.members = members;
        let record = self.make_record(started, hits, 0, 0)?;
        Ok(RoundOutput {
            record,
            events: Vec::new(),
            offspring: Vec::new(),
        })
    }

    /// Runs one reproduce/evaluate/select round. On error the engine is left
    /// at the previous round.
    pub fn step(&mut self) -> Result<RoundOutput, EngineError> {
        let started = Instant::now();
        let hits = self.ctx.evaluator.cache().hits();
        let next_round = self.round + 1;
        let kind = self.config.fitness_kind;
        let mut rng = self.rng.clone();

        let mut current = self.population.clone();
        self.evaluate(&mut current.members)?;

        // every parent draw happens before any generate call
        let mut draws: Vec<Vec<Individual>> = Vec::with_capacity(self.config.offspring_per_round());
        for step in &self.config.reproduction_plan {
            for _ in 0..step.count {
                draws.push(select_parents(&current, step.n_p, kind, &mut rng)?);
            }
        }

        let results = map_ordered(&draws, self.options.generation_concurrency, |child, parents| {
            self.reproduce(next_round, child, parents)
        })?;

        let mut next_id = self.next_id;
        let mut offspring = Vec::with_capacity(draws.len());
        let mut events = Vec::new();
        let (mut calls, mut failures) = (0, 0);
        for (parents, result) in draws.iter().zip(results) {
            let text = result
                .prompt
                .as_deref()
                .unwrap_or_else(|| parents[0].prompt_text());
            let parent_ids = parents.iter().map(Individual::id).collect();
            offspring.push(Individual::new(IndividualId(next_id), text, next_round, parent_ids)?);
            next_id += 1;
            calls += result.calls;
            failures += result.failures;
            events.extend(result.events);
        }
        self.evaluate(&mut offspring)?;

        let mut candidates = current.members;
        candidates.extend(offspring.iter().cloned());
        let next = survivor_selection(candidates, &self.config, next_round, &mut rng)?;

        self.population = next;
        self.round = next_round;
        self.next_id = next_id;
        self.rng = rng;
        let record = self.make_record(started, hits, calls, failures)?;
        Ok(RoundOutput {
            record,
            events,
            offspring,
        })
    }

    fn reproduce(
        &self,
        round: u32,
        child: usize,
        parents: &[Individual],
    ) -> Result<ChildResult, EngineError> {
        let meta_prompt = build_meta_prompt(self.ctx.template, self.ctx.task, parents)?;
        let parent_texts: Vec<String> = parents.iter().map(|p| p.prompt_text().to_string()).collect();
        let parent_ids: Vec<IndividualId> = parents.iter().map(Individual::id).collect();
        let mut out = ChildResult {
            prompt: None,
            events: Vec::new(),
            calls: 0,
            failures: 0,
        };
        for attempt in 0..self.config.attempts_per_child() {
            let request = GenerationRequest {
                meta_prompt: meta_prompt.clone(),
                temperature: self.options.temperature,
                max_tokens: self.options.max_tokens,
                attempt,
                entropy: derive_entropy(self.config.seed, round, child, attempt),
                parents: parent_texts.clone(),
            };
            out.calls += 1;
            let mut event = GenerationEvent {
                round,
                child,
                attempt,
                parent_ids: parent_ids.clone(),
                status: GenerationStatus::Ok,
                provider_id: self.ctx.generator.provider_id().to_string(),
                latency_ms: 0,
                raw_text: String::new(),
                prompt: None,
            };
            match self.ctx.generator.generate(&request) {
                Ok(outcome) => {
                    event.latency_ms = outcome.latency.as_millis() as u64;
                    event.provider_id = outcome.provider_id;
                    match extract_prompt(&outcome.raw_text) {
                        Ok(prompt) => {
                            event.raw_text = outcome.raw_text;
                            event.prompt = Some(prompt.clone());
                            out.events.push(event);
                            out.prompt = Some(prompt);
                            return Ok(out);
                        }
                        Err(_) => {
                            event.status = GenerationStatus::ExtractionFailure;
                            event.raw_text = outcome.raw_text;
                        }
                    }
                }
                Err(GenerationError::ProviderRefusal(reason)) => {
                    event.status = GenerationStatus::Refusal;
                    event.raw_text = reason;
                }
                Err(e) => return Err(e.into()),
            }
            out.failures += 1;
            out.events.push(event);
        }
        log::debug!("round {round} child {child}: no usable prompt, copying first parent");
        Ok(out)
    }

    fn make_record(
        &self,
        started: Instant,
        hits_before: u64,
        generation_calls: u64,
        extraction_failures: u64,
    ) -> Result<RunRecord, EngineError> {
        let kind = self.config.fitness_kind;
        let best = &self.population.members[elite_index(&self.population.members, kind)?];
        let best_test_fitness = match &self.ctx.test {
            Some(test)
                if self.options.test_eval_every > 0
                    && self.round.is_multiple_of(self.options.test_eval_every) =>
            {
                Some(self.ctx.evaluator.fitness(best.prompt_text(), test, kind)?)
            }
            _ => None,
        };
        let wall_time_ms = if self.options.record_wall_time {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        Ok(RunRecord {
            round: self.round,
            best_train_fitness: best.require_fitness()?,
            mean_train_fitness: self.population.mean_fitness()?,
            best_prompt_text: best.prompt_text().to_string(),
            generation_calls,
            extraction_failures,
            cache_hits: self.ctx.evaluator.cache().hits() - hits_before,
            wall_time_ms,
            best_test_fitness,
        })
    }

    /// Drives the engine to its final round, emitting each record. Checks
    /// `stop` between rounds.
    pub fn run_to_end(
        &mut self,
        sink: &mut dyn RecordSink,
        stop: Option<&AtomicBool>,
    ) -> Result<(), EngineError> {
        while !self.is_finished() {
            if stop.is_some_and(|s| s.load(Ordering::SeqCst)) {
                break;
            }
            let out = self.step()?;
            sink.emit(&out.record, &out.events)?;
        }
        Ok(())
    }
}

/// Runs the full evolution: baseline record, then `config.rounds` rounds.
pub fn evolve(
    config: EvolutionConfig,
    ctx: EngineContext<'_>,
    options: EngineOptions,
    sink: &mut dyn RecordSink,
) -> Result<Population, EngineError> {
    let mut engine = Engine::new(config, ctx, options)?;
    let baseline = engine.start()?;
    sink.emit(&baseline.record, &baseline.events)?;
    engine.run_to_end(sink, None)?;
    Ok(engine.population)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn entropy_depends_on_every_coordinate() {
        let base = derive_entropy(42, 1, 0, 0);
        assert_eq!(base, derive_entropy(42, 1, 0, 0));
        assert_ne!(base, derive_entropy(43, 1, 0, 0));
        assert_ne!(base, derive_entropy(42, 2, 0, 0));
        assert_ne!(base, derive_entropy(42, 1, 1, 0));
        assert_ne!(base, derive_entropy(42, 1, 0, 1));
    }

    #[test]
    fn rng_state_round_trips_mid_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..37 {
            rng.next_u32();
        }
        let state = RngState::capture(&rng);
        let json = serde_json::to_string(&state).unwrap();
        let mut restored = serde_json::from_str::<RngState>(&json).unwrap().restore().unwrap();
        for _ in 0..100 {
            assert_eq!(rng.next_u64(), restored.next_u64());
        }
    }
}
