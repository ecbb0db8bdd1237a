//! Population state, selection operators and the round loop.

mod individual;
mod record;
mod round;
mod selection;

use thiserror::Error;

use crate::evaluator::EvalError;
use crate::generator::GenerationError;
use crate::metaprompt::MetaPromptError;

pub use individual::{normalize_prompt, FitnessKind, Individual, IndividualId, Population};
pub use record::{GenerationEvent, GenerationStatus, RecordSink, RunRecord, SinkError, VecSink};
pub use round::{derive_entropy, evolve, Engine, EngineContext, EngineOptions, EngineState, RngState};
pub use selection::{
    elite_index, population_performance, roulette_sample, sample_indices, select_parents,
    selection_probabilities, softmax, survivor_selection, Replacement,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("individual {0} has no fitness")]
    UnevaluatedIndividual(IndividualId),
    #[error("need {need} candidates for sampling without replacement, have {have}")]
    NotEnoughCandidates { need: usize, have: usize },
    #[error("prompt text is empty after normalization")]
    EmptyPrompt,
    #[error("fitness of individual {0} is already set")]
    FitnessAlreadySet(IndividualId),
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    MetaPrompt(#[from] MetaPromptError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error(transparent)]
    Sink(#[from] SinkError),
}

/// One entry of the reproduction plan: `count` children, each bred from a
/// fresh draw of `n_p` parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReproductionStep {
    pub n_p: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub n_pop: usize,
    pub n_s: usize,
    pub rounds: u32,
    pub reproduction_plan: Vec<ReproductionStep>,
    pub elite_preservation: bool,
    pub seed: u64,
    pub fitness_kind: FitnessKind,
    pub extraction_retries: u32,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            n_pop: 20,
            n_s: 20,
            rounds: 500,
            reproduction_plan: vec![
                ReproductionStep { n_p: 1, count: 5 },
                ReproductionStep { n_p: 2, count: 5 },
            ],
            elite_preservation: true,
            seed: 42,
            fitness_kind: FitnessKind::Accuracy,
            extraction_retries: 3,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidConfig(msg));
        if self.n_pop == 0 {
            return bad("n_pop must be positive".into());
        }
        if self.n_s != self.n_pop {
            return bad(format!("n_s ({}) must equal n_pop ({})", self.n_s, self.n_pop));
        }
        if self.offspring_per_round() == 0 {
            return bad("reproduction_plan must produce at least one child per round".into());
        }
        for step in &self.reproduction_plan {
            if step.n_p == 0 || step.count == 0 {
                return bad("reproduction_plan entries need positive n_p and count".into());
            }
            if step.n_p > self.n_pop {
                return bad(format!("n_p ({}) exceeds n_pop ({})", step.n_p, self.n_pop));
            }
        }
        Ok(())
    }

    pub fn offspring_per_round(&self) -> usize {
        self.reproduction_plan.iter().map(|s| s.count).sum()
    }

    /// Generation attempts per child before falling back to a parent copy.
    pub fn attempts_per_child(&self) -> u32 {
        self.extraction_retries.max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_setup() {
        let c = EvolutionConfig::default();
        assert_eq!((c.n_pop, c.n_s, c.rounds, c.seed), (20, 20, 500, 42));
        assert_eq!(c.offspring_per_round(), 10);
        assert!(c.elite_preservation);
        assert_eq!(c.fitness_kind, FitnessKind::Accuracy);
        c.validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_plans() {
        let mut c = EvolutionConfig::default();
        c.reproduction_plan = vec![];
        assert!(c.validate().is_err());

        let mut c = EvolutionConfig::default();
        c.n_pop = 2;
        c.n_s = 2;
        c.reproduction_plan = vec![ReproductionStep { n_p: 3, count: 1 }];
        assert!(c.validate().is_err());

        let mut c = EvolutionConfig::default();
        c.n_s = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_toml_gets_defaults() {
        let c: EvolutionConfig = toml::from_str("rounds = 5\nfitness_kind = \"loss\"").unwrap();
        assert_eq!(c.rounds, 5);
        assert_eq!(c.n_pop, 20);
        assert_eq!(c.fitness_kind, FitnessKind::Loss);
    }
}
