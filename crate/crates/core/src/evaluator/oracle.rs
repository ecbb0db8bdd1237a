use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};

use super::{EvalError, LabeledExample, ScoreVector, TargetModel};
use crate::metaprompt::TaskSpec;

/// Position of an input in [0, 1), from the first 8 bytes of its SHA-256.
pub fn example_quantile(input: &str) -> f64 {
    let digest = Sha256::digest(input.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    (u64::from_be_bytes(head) >> 11) as f64 / (1u64 << 53) as f64
}

fn normalize_word(w: &str) -> String {
    w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// Synthetic target model whose accuracy depends only on how many distinct
/// target keywords the prompt contains.
///
/// With `m` of `K` keywords present, the per-example success rate is
/// `floor + (1 - floor) * m / K`, where `floor = 1 / |labels|` is chance. An
/// example is answered correctly when its hash quantile falls below that
/// rate, so accuracy never drops when a keyword is added and reaches 1.0
/// with all keywords. Confidence in the predicted label rises with `m`, which
/// keeps the loss landscape informative too.
#[derive(Debug, Clone)]
pub struct KeywordOracle {
    keywords: BTreeSet<String>,
    task: TaskSpec,
    truth: HashMap<String, usize>,
}

impl KeywordOracle {
    /// `examples` supplies ground truth for every input the oracle will see.
    pub fn new(keywords: &[String], task: &TaskSpec, examples: &[LabeledExample]) -> Self {
        let keywords = keywords
            .iter()
            .map(|k| normalize_word(k))
            .filter(|k| !k.is_empty())
            .collect();
        let truth = examples
            .iter()
            .map(|ex| (ex.render_segments(), ex.label))
            .collect();
        Self {
            keywords,
            task: task.clone(),
            truth,
        }
    }

    pub fn keyword_count(&self) -> usize {
        self.keywords.len()
    }

    /// Distinct target keywords among the words of `prompt`.
    pub fn keywords_present(&self, prompt: &str) -> usize {
        prompt
            .split_whitespace()
            .map(normalize_word)
            .filter(|w| self.keywords.contains(w))
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Expected accuracy with `m` keywords present.
    pub fn success_rate(&self, m: usize) -> f64 {
        let floor = 1.0 / self.task.labels.len() as f64;
        if self.keywords.is_empty() {
            return floor;
        }
        floor + (1.0 - floor) * m.min(self.keywords.len()) as f64 / self.keywords.len() as f64
    }

    fn confidence(&self, m: usize) -> f64 {
        let k = self.keywords.len().max(1) as f64;
        0.55 + 0.4 * m.min(self.keywords.len()) as f64 / k
    }

    /// Splits a rendered input into (input, prompt).
    fn split_rendered<'t>(&self, rendered: &'t str) -> Result<(&'t str, &'t str), EvalError> {
        let suffix = format!("{}{}", self.task.interval, self.task.head);
        let body = rendered.strip_suffix(&suffix).ok_or_else(|| {
            EvalError::TargetUnavailable("rendered text does not end with the head".into())
        })?;
        body.rsplit_once(self.task.interval.as_str())
            .ok_or_else(|| EvalError::TargetUnavailable("rendered text has no prompt line".into()))
    }
}

impl TargetModel for KeywordOracle {
    fn score(&self, rendered: &str, candidate_words: &[String]) -> Result<ScoreVector, EvalError> {
        if candidate_words != self.task.label_words().as_slice() {
            return Err(EvalError::TargetUnavailable(
                "candidate words differ from the oracle's task labels".into(),
            ));
        }
        let (input, prompt) = self.split_rendered(rendered)?;
        let label = *self
            .truth
            .get(input)
            .ok_or_else(|| EvalError::TargetUnavailable(format!("unknown input {input:?}")))?;
        let n = candidate_words.len();
        let m = self.keywords_present(prompt);
        let correct = example_quantile(input) < self.success_rate(m);
        let predicted = if correct { label } else { (label + 1) % n };
        let conf = self.confidence(m);
        let rest = ((1.0 - conf) / (n - 1) as f64).ln();
        Ok(ScoreVector(
            (0..n)
                .map(|i| if i == predicted { conf.ln() } else { rest })
                .collect(),
        ))
    }
}
