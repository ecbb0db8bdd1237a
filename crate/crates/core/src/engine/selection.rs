use rand::Rng;

use super::{EngineError, EvolutionConfig, FitnessKind, Individual, Population};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Replacement {
    With,
    Without,
}

/// Numerically stable softmax: `e^{v_i} / sum_j e^{v_j}`, evaluated after
/// subtracting the maximum.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Roulette probabilities proportional to `e^{fitness}`. Loss is negated
/// first so the better individual is always the likelier one.
pub fn selection_probabilities(
    candidates: &[Individual],
    kind: FitnessKind,
) -> Result<Vec<f64>, EngineError> {
    if candidates.is_empty() {
        return Err(EngineError::EmptyCandidateSet);
    }
    let utilities = candidates
        .iter()
        .map(|c| c.require_fitness().map(|f| kind.utility(f)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(softmax(&utilities))
}

/// Draws `n` indices from a probability vector.
///
/// Without replacement, draws are sequential: each chosen index is removed
/// and the remaining mass renormalized before the next draw. Every draw
/// consumes exactly one `f64` from `rng`.
pub fn sample_indices<R: Rng + ?Sized>(
    probs: &[f64],
    n: usize,
    replacement: Replacement,
    rng: &mut R,
) -> Result<Vec<usize>, EngineError> {
    if probs.is_empty() {
        return Err(EngineError::EmptyCandidateSet);
    }
    if replacement == Replacement::Without && n > probs.len() {
        return Err(EngineError::NotEnoughCandidates {
            need: n,
            have: probs.len(),
        });
    }
    let mut remaining: Vec<usize> = (0..probs.len()).collect();
    let mut picked = Vec::with_capacity(n);
    for _ in 0..n {
        let total: f64 = remaining.iter().map(|&i| probs[i]).sum();
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut slot = remaining.len() - 1;
        for (pos, &i) in remaining.iter().enumerate() {
            acc += probs[i];
            if target < acc {
                slot = pos;
                break;
            }
        }
        let chosen = remaining[slot];
        picked.push(chosen);
        if replacement == Replacement::Without {
            remaining.remove(slot);
        }
    }
    Ok(picked)
}

pub fn roulette_sample<R: Rng + ?Sized>(
    candidates: &[Individual],
    n: usize,
    kind: FitnessKind,
    replacement: Replacement,
    rng: &mut R,
) -> Result<Vec<Individual>, EngineError> {
    let probs = selection_probabilities(candidates, kind)?;
    let idx = sample_indices(&probs, n, replacement, rng)?;
    Ok(idx.into_iter().map(|i| candidates[i].clone()).collect())
}

/// Parents are drawn with replacement, so the same individual may appear
/// twice in a multi-parent draw.
pub fn select_parents<R: Rng + ?Sized>(
    population: &Population,
    n_p: usize,
    kind: FitnessKind,
    rng: &mut R,
) -> Result<Vec<Individual>, EngineError> {
    roulette_sample(&population.members, n_p, kind, Replacement::With, rng)
}

/// Index of the best candidate; ties go to the lowest id.
pub fn elite_index(candidates: &[Individual], kind: FitnessKind) -> Result<usize, EngineError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let u = kind.utility(c.require_fitness()?);
        best = match best {
            None => Some((i, u)),
            Some((bi, bu)) => {
                if u > bu || (u == bu && c.id() < candidates[bi].id()) {
                    Some((i, u))
                } else {
                    Some((bi, bu))
                }
            }
        };
    }
    best.map(|(i, _)| i).ok_or(EngineError::EmptyCandidateSet)
}

/// Picks the next population of exactly `n_s` members.
///
/// With elite preservation the best candidate takes the first slot and the
/// rest are roulette-drawn without replacement from the other candidates.
pub fn survivor_selection<R: Rng + ?Sized>(
    mut candidates: Vec<Individual>,
    config: &EvolutionConfig,
    generation: u32,
    rng: &mut R,
) -> Result<Population, EngineError> {
    let n_s = config.n_s;
    if candidates.len() < n_s {
        return Err(EngineError::NotEnoughCandidates {
            need: n_s,
            have: candidates.len(),
        });
    }
    for c in &candidates {
        c.require_fitness()?;
    }
    let kind = config.fitness_kind;
    let mut members = Vec::with_capacity(n_s);
    if config.elite_preservation && n_s > 0 {
        let elite = elite_index(&candidates, kind)?;
        members.push(candidates.remove(elite));
    }
    let wanted = n_s - members.len();
    if wanted > 0 {
        let probs = selection_probabilities(&candidates, kind)?;
        let picked = sample_indices(&probs, wanted, Replacement::Without, rng)?;
        members.extend(picked.into_iter().map(|i| candidates[i].clone()));
    }
    Ok(Population {
        generation,
        members,
    })
}

/// Best member fitness: the maximum accuracy, or the minimum loss.
pub fn population_performance(
    population: &Population,
    kind: FitnessKind,
) -> Result<f64, EngineError> {
    let idx = elite_index(&population.members, kind)?;
    population.members[idx].require_fitness()
}
