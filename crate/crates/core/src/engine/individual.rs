use std::fmt;

use serde::{Deserialize, Serialize};

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndividualId(pub u64);

impl fmt::Display for IndividualId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitnessKind {
    /// Fraction of examples classified correctly; higher is better.
    #[default]
    Accuracy,
    /// Mean cross-entropy over the label words; lower is better.
    Loss,
}

impl FitnessKind {
    /// Maps a fitness value onto a scale where larger is always better.
    pub fn utility(self, fitness: f64) -> f64 {
        match self {
            FitnessKind::Accuracy => fitness,
            FitnessKind::Loss => -fitness,
        }
    }

    pub fn is_better(self, a: f64, b: f64) -> bool {
        self.utility(a) > self.utility(b)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FitnessKind::Accuracy => "accuracy",
            FitnessKind::Loss => "loss",
        }
    }
}

/// Strips curly braces and folds all whitespace runs into single spaces.
///
/// Braces delimit prompts in generator output and newlines separate parents
/// in the meta-prompt, so neither may appear inside a stored prompt.
pub fn normalize_prompt(raw: &str) -> String {
    raw.split(['{', '}'])
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    id: IndividualId,
    prompt_text: String,
    fitness: Option<f64>,
    born_round: u32,
    parent_ids: Vec<IndividualId>,
}

impl Individual {
    pub fn new(
        id: IndividualId,
        prompt_text: &str,
        born_round: u32,
        parent_ids: Vec<IndividualId>,
    ) -> Result<Self, EngineError> {
        let prompt_text = normalize_prompt(prompt_text);
        if prompt_text.is_empty() {
            return Err(EngineError::EmptyPrompt);
        }
        Ok(Self {
            id,
            prompt_text,
            fitness: None,
            born_round,
            parent_ids,
        })
    }

    pub fn id(&self) -> IndividualId {
        self.id
    }

    pub fn prompt_text(&self) -> &str {
        &self.prompt_text
    }

    pub fn fitness(&self) -> Option<f64> {
        self.fitness
    }

    pub fn born_round(&self) -> u32 {
        self.born_round
    }

    pub fn parent_ids(&self) -> &[IndividualId] {
        &self.parent_ids
    }

    pub fn require_fitness(&self) -> Result<f64, EngineError> {
        self.fitness.ok_or(EngineError::UnevaluatedIndividual(self.id))
    }

    /// Sets fitness once. Re-setting the bit-identical value is accepted.
    pub fn set_fitness(&mut self, fitness: f64) -> Result<(), EngineError> {
        match self.fitness {
            Some(old) if old.to_bits() != fitness.to_bits() => {
                Err(EngineError::FitnessAlreadySet(self.id))
            }
            _ => {
                self.fitness = Some(fitness);
                Ok(())
            }
        }
    }

    pub fn with_fitness(mut self, fitness: f64) -> Self {
        self.fitness = Some(fitness);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub generation: u32,
    pub members: Vec<Individual>,
}

impl Population {
    /// `n_pop` copies of the initial prompt with ids `first_id..first_id + n_pop`.
    pub fn initial(prompt: &str, n_pop: usize, first_id: u64) -> Result<Self, EngineError> {
        let members = (0..n_pop as u64)
            .map(|i| Individual::new(IndividualId(first_id + i), prompt, 0, Vec::new()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            generation: 0,
            members,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_evaluated(&self) -> bool {
        self.members.iter().all(|m| m.fitness.is_some())
    }

    pub fn mean_fitness(&self) -> Result<f64, EngineError> {
        if self.members.is_empty() {
            return Err(EngineError::EmptyCandidateSet);
        }
        let mut sum = 0.0;
        for m in &self.members {
            sum += m.require_fitness()?;
        }
        Ok(sum / self.members.len() as f64)
    }
}
