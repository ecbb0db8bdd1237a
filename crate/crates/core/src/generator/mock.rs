use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GenerationError, GenerationOutcome, GenerationRequest, Generator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Insert,
    Delete,
    Replace,
}

impl EditKind {
    pub const ALL: [EditKind; 3] = [EditKind::Insert, EditKind::Delete, EditKind::Replace];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutation {
    pub parent_index: usize,
    /// `None` when no allowed edit applies (e.g. empty pool and a one-word parent).
    pub edit: Option<EditKind>,
    /// Word removed by a delete or replaced by a replace.
    pub removed: Option<String>,
    /// Word added by an insert or replace.
    pub added: Option<String>,
    pub prompt: String,
}

fn feasible(kind: EditKind, words: usize, pool: &[String]) -> bool {
    match kind {
        EditKind::Delete => words >= 2,
        EditKind::Insert => !pool.is_empty(),
        EditKind::Replace => !pool.is_empty() && words >= 1,
    }
}

/// Applies one word-level edit to one parent, all choices keyed by `entropy`.
///
/// An empty `allowed` list means all three edit kinds. When the drawn edit
/// cannot apply, the next allowed kind (cyclically) is used instead.
pub fn mutate_prompt(
    parents: &[&str],
    entropy: u64,
    pool: &[String],
    allowed: &[EditKind],
) -> Mutation {
    assert!(!parents.is_empty(), "mutation needs at least one parent");
    let allowed = if allowed.is_empty() { &EditKind::ALL[..] } else { allowed };
    let mut rng = ChaCha8Rng::seed_from_u64(entropy);
    let parent_index = rng.gen_range(0..parents.len());
    let mut words: Vec<String> = parents[parent_index]
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let first = rng.gen_range(0..allowed.len());
    let edit = (0..allowed.len())
        .map(|k| allowed[(first + k) % allowed.len()])
        .find(|&kind| feasible(kind, words.len(), pool));

    let (mut removed, mut added) = (None, None);
    match edit {
        Some(EditKind::Insert) => {
            let pos = rng.gen_range(0..=words.len());
            let word = pool[rng.gen_range(0..pool.len())].clone();
            words.insert(pos, word.clone());
            added = Some(word);
        }
        Some(EditKind::Delete) => {
            let pos = rng.gen_range(0..words.len());
            removed = Some(words.remove(pos));
        }
        Some(EditKind::Replace) => {
            let pos = rng.gen_range(0..words.len());
            let word = pool[rng.gen_range(0..pool.len())].clone();
            removed = Some(std::mem::replace(&mut words[pos], word.clone()));
            added = Some(word);
        }
        None => {}
    }
    Mutation {
        parent_index,
        edit,
        removed,
        added,
        prompt: words.join(" "),
    }
}

/// Mutates a parent and wraps the result in a short completion that ends
/// with the new prompt in curly brackets.
pub fn mock_mutate(parents: &[&str], entropy: u64, pool: &[String], allowed: &[EditKind]) -> String {
    let m = mutate_prompt(parents, entropy, pool, allowed);
    let reason = match (m.edit, &m.removed, &m.added) {
        (Some(EditKind::Insert), _, Some(w)) => {
            format!("Adding the word \"{w}\" makes the request more specific.")
        }
        (Some(EditKind::Delete), Some(w), _) => {
            format!("Dropping the word \"{w}\" keeps the request direct.")
        }
        (Some(EditKind::Replace), Some(old), Some(new)) => {
            format!("Replacing \"{old}\" with \"{new}\" sharpens the wording.")
        }
        _ => "The prompt already reads well, so it stays as it is.".to_string(),
    };
    format!(
        "Let me look at prompt {} first. {reason} The new prompt is:\n{{{}}}",
        m.parent_index + 1,
        m.prompt
    )
}

/// Deterministic stand-in for the generator model.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    pool: Vec<String>,
    edits: Vec<EditKind>,
}

impl MockGenerator {
    /// Pool entries are split into single brace-free words.
    pub fn new(pool: &[String], edits: &[EditKind]) -> Self {
        let pool = pool
            .iter()
            .flat_map(|w| w.split_whitespace())
            .map(|w| w.replace(['{', '}'], ""))
            .filter(|w| !w.is_empty())
            .collect();
        Self {
            pool,
            edits: edits.to_vec(),
        }
    }

    pub fn pool(&self) -> &[String] {
        &self.pool
    }
}

impl Generator for MockGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationOutcome, GenerationError> {
        request.validate()?;
        if request.parents.is_empty() {
            return Err(GenerationError::InvalidRequest(
                "mock generator needs the parent prompts".into(),
            ));
        }
        let parents: Vec<&str> = request.parents.iter().map(String::as_str).collect();
        Ok(GenerationOutcome {
            raw_text: mock_mutate(&parents, request.entropy, &self.pool, &self.edits),
            latency: Duration::ZERO,
            provider_id: self.provider_id().to_string(),
        })
    }

    fn provider_id(&self) -> &str {
        "mock"
    }
}
