//! Fitness of a prompt: render each example with the prompt, ask the target
//! model for label-word scores, and aggregate accuracy or cross-entropy.

mod cache;
mod oracle;
mod remote;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::FitnessKind;
use crate::metaprompt::TaskSpec;
use crate::par::map_ordered;

pub use cache::{CacheEntry, CacheKey, FitnessCache};
pub use oracle::{example_quantile, KeywordOracle};
pub use remote::{RemoteScorer, RemoteScorerSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("target model unavailable: {0}")]
    TargetUnavailable(String),
    #[error("invalid score vector: {0}")]
    InvalidScores(String),
    #[error("label index {label} out of range for {n_labels} labels")]
    LabelOutOfRange { label: usize, n_labels: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub segments: Vec<Segment>,
    /// Index into the task's label list.
    pub label: usize,
}

impl LabeledExample {
    pub fn single(text: &str, label: usize) -> Self {
        Self {
            segments: vec![Segment {
                name: "sentence".into(),
                text: text.into(),
            }],
            label,
        }
    }

    pub fn pair(first: &str, second: &str, label: usize) -> Self {
        Self {
            segments: vec![
                Segment {
                    name: "sentence1".into(),
                    text: first.into(),
                },
                Segment {
                    name: "sentence2".into(),
                    text: second.into(),
                },
            ],
            label,
        }
    }

    /// The input part of a rendered example. Multi-segment examples get one
    /// `name: text` line per segment.
    pub fn render_segments(&self) -> String {
        match self.segments.as_slice() {
            [only] => only.text.clone(),
            many => many
                .iter()
                .map(|s| format!("{}: {}", s.name, s.text))
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

/// Log-probabilities of each label word, aligned with the task's labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn validate(&self, n_labels: usize) -> Result<(), EvalError> {
        if self.0.len() != n_labels {
            return Err(EvalError::InvalidScores(format!(
                "expected {n_labels} scores, got {}",
                self.0.len()
            )));
        }
        if let Some(bad) = self.0.iter().find(|v| !v.is_finite()) {
            return Err(EvalError::InvalidScores(format!("non-finite score {bad}")));
        }
        Ok(())
    }

    /// `-log softmax(scores)[label]`, restricted to the label set.
    pub fn cross_entropy(&self, label: usize) -> f64 {
        let max = self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + self.0.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        lse - self.0[label]
    }
}

/// `<input>\n<prompt>\n<head>`, with `interval` as the separator.
pub fn render_input(example: &LabeledExample, prompt: &str, task: &TaskSpec) -> String {
    format!(
        "{}{sep}{prompt}{sep}{}",
        example.render_segments(),
        task.head,
        sep = task.interval
    )
}

/// Highest-scoring label; exact ties go to the earliest declared label.
pub fn predict(scores: &ScoreVector, _task: &TaskSpec) -> usize {
    let mut best = 0;
    for (i, &s) in scores.0.iter().enumerate().skip(1) {
        if s > scores.0[best] {
            best = i;
        }
    }
    best
}

/// The model being prompted. Implementations must be deterministic for
/// caching to be transparent.
pub trait TargetModel: Send + Sync {
    fn score(&self, rendered: &str, candidate_words: &[String]) -> Result<ScoreVector, EvalError>;
}

/// Fitness of `prompt` over `examples`, summed in example order. Any failed
/// example fails the whole evaluation.
pub fn fitness(
    prompt: &str,
    examples: &[LabeledExample],
    task: &TaskSpec,
    target: &dyn TargetModel,
    kind: FitnessKind,
) -> Result<f64, EvalError> {
    let scores = score_examples(prompt, examples, task, target, 1)?;
    aggregate(examples, &scores, task, kind)
}

fn score_examples(
    prompt: &str,
    examples: &[LabeledExample],
    task: &TaskSpec,
    target: &dyn TargetModel,
    workers: usize,
) -> Result<Vec<ScoreVector>, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let words = task.label_words();
    map_ordered(examples, workers, |_, ex| {
        if ex.label >= words.len() {
            return Err(EvalError::LabelOutOfRange {
                label: ex.label,
                n_labels: words.len(),
            });
        }
        let scores = target.score(&render_input(ex, prompt, task), &words)?;
        scores.validate(words.len())?;
        Ok(scores)
    })
}

fn aggregate(
    examples: &[LabeledExample],
    scores: &[ScoreVector],
    task: &TaskSpec,
    kind: FitnessKind,
) -> Result<f64, EvalError> {
    let n = examples.len() as f64;
    Ok(match kind {
        FitnessKind::Accuracy => {
            let correct = examples
                .iter()
                .zip(scores)
                .filter(|(ex, s)| predict(s, task) == ex.label)
                .count();
            correct as f64 / n
        }
        FitnessKind::Loss => {
            let mut total = 0.0;
            for (ex, s) in examples.iter().zip(scores) {
                total += s.cross_entropy(ex.label);
            }
            total / n
        }
    })
}

/// A split to evaluate on, identified by its content fingerprint.
#[derive(Debug, Clone, Copy)]
pub struct EvalSet<'a> {
    pub examples: &'a [LabeledExample],
    pub fingerprint: &'a str,
}

/// Cached fitness evaluation against one target model and task.
pub struct Evaluator {
    target: Arc<dyn TargetModel>,
    task: TaskSpec,
    cache: FitnessCache,
    target_calls: AtomicU64,
    concurrency: usize,
}

impl Evaluator {
    pub fn new(target: Arc<dyn TargetModel>, task: TaskSpec) -> Self {
        Self {
            target,
            task,
            cache: FitnessCache::default(),
            target_calls: AtomicU64::new(0),
            concurrency: 1,
        }
    }

    /// Score up to `n` examples of one prompt concurrently.
    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn cache(&self) -> &FitnessCache {
        &self.cache
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    /// Number of `TargetModel::score` calls made so far.
    pub fn target_calls(&self) -> u64 {
        self.target_calls.load(Ordering::SeqCst)
    }

    pub fn fitness(&self, prompt: &str, set: &EvalSet<'_>, kind: FitnessKind) -> Result<f64, EvalError> {
        let key = CacheKey::new(prompt, set.fingerprint, kind);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        self.target_calls
            .fetch_add(set.examples.len() as u64, Ordering::SeqCst);
        let scores = score_examples(
            prompt,
            set.examples,
            &self.task,
            self.target.as_ref(),
            self.concurrency,
        )?;
        let value = aggregate(set.examples, &scores, &self.task, kind)?;
        self.cache.insert(key, value);
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl TargetModel for Fixed {
        fn score(&self, _: &str, _: &[String]) -> Result<ScoreVector, EvalError> {
            Ok(ScoreVector(self.0.clone()))
        }
    }

    struct Broken;

    impl TargetModel for Broken {
        fn score(&self, _: &str, _: &[String]) -> Result<ScoreVector, EvalError> {
            Err(EvalError::TargetUnavailable("offline".into()))
        }
    }

    #[test]
    fn renders_single_sentence() {
        let ex = LabeledExample::single("a gorgeous film", 1);
        assert_eq!(
            render_input(&ex, "Classify the following sentence.", &TaskSpec::sst2()),
            "a gorgeous film\nClassify the following sentence.\nclass:"
        );
    }

    #[test]
    fn renders_pair() {
        let ex = LabeledExample::pair("x", "y", 0);
        assert_eq!(
            render_input(&ex, "p", &TaskSpec::rte()),
            "sentence1: x\nsentence2: y\np\nclass:"
        );
    }

    #[test]
    fn head_override() {
        let mut task = TaskSpec::sst2();
        task.head = "label:".into();
        let out = render_input(&LabeledExample::single("t", 0), "p", &task);
        assert!(out.ends_with("\nlabel:"));
        assert_eq!(out.matches('\n').count(), 2);
    }

    #[test]
    fn predict_argmax_and_ties() {
        let task = TaskSpec::sst2();
        // labels are [negative, positive]
        assert_eq!(predict(&ScoreVector(vec![-2.3, -0.1]), &task), 1);
        assert_eq!(predict(&ScoreVector(vec![-0.7, -0.7]), &task), 0);
        assert_eq!(predict(&ScoreVector(vec![-0.7 + 5.0, -0.7 + 5.0]), &task), 0);
    }

    #[test]
    fn uniform_loss_is_ln2() {
        let task = TaskSpec::sst2();
        let data: Vec<_> = (0..32).map(|i| LabeledExample::single(&format!("t{i}"), i % 2)).collect();
        let ln_half = 0.5f64.ln();
        let f = fitness("p", &data, &task, &Fixed(vec![ln_half, ln_half]), FitnessKind::Loss).unwrap();
        assert!((f - std::f64::consts::LN_2).abs() < 1e-12);
        let acc = fitness("p", &data, &task, &Fixed(vec![-0.1, -2.0]), FitnessKind::Accuracy).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn loss_uses_label_set_normalization() {
        // unnormalized scores get renormalized over the two label words
        let s = ScoreVector(vec![-5.0, -5.0]);
        assert!((s.cross_entropy(0) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn failures_fail_the_whole_evaluation() {
        let task = TaskSpec::sst2();
        let data = vec![LabeledExample::single("t", 0)];
        assert_eq!(
            fitness("p", &data, &task, &Broken, FitnessKind::Accuracy),
            Err(EvalError::TargetUnavailable("offline".into()))
        );
        assert_eq!(
            fitness("p", &[], &task, &Fixed(vec![0.0, 0.0]), FitnessKind::Accuracy),
            Err(EvalError::EmptyDataset)
        );
        assert!(matches!(
            fitness("p", &data, &task, &Fixed(vec![0.0]), FitnessKind::Accuracy),
            Err(EvalError::InvalidScores(_))
        ));
        assert!(matches!(
            fitness("p", &data, &task, &Fixed(vec![0.0, f64::NAN]), FitnessKind::Accuracy),
            Err(EvalError::InvalidScores(_))
        ));
        let bad_label = vec![LabeledExample::single("t", 5)];
        assert!(matches!(
            fitness("p", &bad_label, &task, &Fixed(vec![0.0, 0.0]), FitnessKind::Accuracy),
            Err(EvalError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn evaluator_caches_per_prompt_dataset_and_kind() {
        let task = TaskSpec::sst2();
        let data: Vec<_> = (0..4).map(|i| LabeledExample::single(&format!("t{i}"), 0)).collect();
        let ev = Evaluator::new(Arc::new(Fixed(vec![-0.1, -3.0])), task);
        let set = EvalSet {
            examples: &data,
            fingerprint: "fp",
        };
        let a = ev.fitness("p", &set, FitnessKind::Accuracy).unwrap();
        assert_eq!(ev.target_calls(), 4);
        let b = ev.fitness("p", &set, FitnessKind::Accuracy).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(ev.target_calls(), 4);
        assert_eq!(ev.cache().hits(), 1);
        ev.fitness("p", &set, FitnessKind::Loss).unwrap();
        assert_eq!(ev.target_calls(), 8);
        let other = EvalSet {
            examples: &data,
            fingerprint: "fp2",
        };
        ev.fitness("p", &other, FitnessKind::Accuracy).unwrap();
        assert_eq!(ev.target_calls(), 12);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn predict_is_shift_invariant(
            scores in prop::collection::vec(-20.0f64..0.0, 2..6),
            shift in -10.0f64..10.0,
        ) {
            let task = TaskSpec::ag_news();
            let a = predict(&ScoreVector(scores.clone()), &task);
            let b = predict(&ScoreVector(scores.iter().map(|s| s + shift).collect()), &task);
            // a shift can only change the winner through rounding at exact ties
            if scores.iter().filter(|&&s| s == scores[a]).count() == 1 {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn strict_max_survives_label_reordering(
            scores in prop::collection::vec(-20.0f64..0.0, 2..6),
        ) {
            let task = TaskSpec::ag_news();
            let winner = predict(&ScoreVector(scores.clone()), &task);
            let mut reversed = scores.clone();
            reversed.reverse();
            let rev_winner = predict(&ScoreVector(reversed), &task);
            if scores.iter().filter(|&&s| s == scores[winner]).count() == 1 {
                prop_assert_eq!(rev_winner, scores.len() - 1 - winner);
            }
        }
    }
}
