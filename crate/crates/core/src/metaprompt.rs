//! Task descriptions, reproduction meta-prompt assembly, and extraction of
//! the newborn prompt from generator output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Individual, IndividualId};

/// Longest prompt accepted from the generator, in characters.
pub const MAX_PROMPT_CHARS: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum MetaPromptError {
    #[error("meta-prompt needs at least one parent")]
    NoParents,
    #[error("parent {0} has no fitness")]
    UnevaluatedParent(IndividualId),
    #[error("invalid task spec: {0}")]
    InvalidTask(String),
    #[error("invalid meta-prompt template: {0}")]
    InvalidTemplate(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractionError {
    #[error("no balanced curly-bracket pair in completion")]
    NoBracePair,
    #[error("curly brackets are empty")]
    Empty,
    #[error("nested or unbalanced curly brackets")]
    NestedBraces,
    #[error("extracted prompt has {0} characters, limit is {MAX_PROMPT_CHARS}")]
    TooLong(usize),
}

/// The four instruction parts of the reproduction meta-prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaPromptTemplate {
    pub i_prompt: String,
    pub i_rep: String,
    pub i_final: String,
    pub i_additional: String,
}

impl Default for MetaPromptTemplate {
    fn default() -> Self {
        Self {
            i_prompt: "A prompt is to guide a language model to better solve the task. \
                       Each prompt is attached with a score. \
                       The better the prompt is, the higher the score is."
                .into(),
            i_rep: "I want you to generate only one new and better prompt for this task. \
                    For example, you can try word replacements, active/positive voice \
                    conversions, adding words or delete words."
                .into(),
            i_final: "Now, generate only one new and better prompt based on all the \
                      information above, especially the given prompts. For example, you can \
                      try word replacements, active/positive voice conversions, adding words \
                      or delete words."
                .into(),
            i_additional: "Let\u{2019}s think step by step briefly. In the end, output one \
                           generated prompt inside curly brackets {}, such as \
                           {Please help me to classify.}."
                .into(),
        }
    }
}

impl MetaPromptTemplate {
    pub fn validate(&self) -> Result<(), MetaPromptError> {
        let parts = [
            ("i_prompt", &self.i_prompt),
            ("i_rep", &self.i_rep),
            ("i_final", &self.i_final),
            ("i_additional", &self.i_additional),
        ];
        for (name, text) in parts {
            if text.trim().is_empty() {
                return Err(MetaPromptError::InvalidTemplate(format!("{name} is empty")));
            }
        }
        if !self.i_additional.contains("curly brackets") {
            return Err(MetaPromptError::InvalidTemplate(
                "i_additional must tell the generator to answer inside curly brackets".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpec {
    /// Label value as it appears in data files.
    pub id: String,
    /// Word the target model is asked to produce for this class.
    pub word: String,
}

impl LabelSpec {
    pub fn new(id: &str, word: &str) -> Self {
        Self {
            id: id.into(),
            word: word.into(),
        }
    }
}

/// A classification task: its description for the generator, label words,
/// initial prompt, and how examples are read from data files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub i_task: String,
    pub labels: Vec<LabelSpec>,
    pub initial_prompt: String,
    #[serde(default = "default_head")]
    pub head: String,
    #[serde(default = "default_interval")]
    pub interval: String,
    /// Text columns, in rendering order. Two columns make a pair task.
    pub columns: Vec<String>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// False when the task strings were not taken from a published setup.
    #[serde(default = "default_true")]
    pub canonical: bool,
}

fn default_head() -> String {
    "class:".into()
}

fn default_interval() -> String {
    "\n".into()
}

fn default_label_column() -> String {
    "label".into()
}

fn default_true() -> bool {
    true
}

impl TaskSpec {
    pub fn sst2() -> Self {
        Self {
            name: "sst2".into(),
            i_task: "The task is to classify the sentiment of a sentence from movie reviews. \
                     Here are 2 classes ({negative}/{positive})."
                .into(),
            labels: vec![LabelSpec::new("0", "negative"), LabelSpec::new("1", "positive")],
            initial_prompt: "Classify the following sentence.".into(),
            head: default_head(),
            interval: default_interval(),
            columns: vec!["sentence".into()],
            label_column: default_label_column(),
            canonical: true,
        }
    }

    pub fn rte() -> Self {
        Self {
            name: "rte".into(),
            i_task: "The task is to classify the relationship between sentence1 and sentence2. \
                     Here are 2 classes ({yes}/{no}). {yes} means the relationship is \
                     entailment, the meaning of one sentence is entailed (can be inferred) \
                     from the other sentence, otherwise {no}."
                .into(),
            labels: vec![LabelSpec::new("0", "yes"), LabelSpec::new("1", "no")],
            initial_prompt: "Classify whether the relationship between the following \
                             sentence1 and sentence2 is entailment."
                .into(),
            head: default_head(),
            interval: default_interval(),
            columns: vec!["sentence1".into(), "sentence2".into()],
            label_column: default_label_column(),
            canonical: true,
        }
    }

    /// News-topic task. Its description and initial prompt are our own wording.
    pub fn ag_news() -> Self {
        Self {
            name: "agnews".into(),
            i_task: "The task is to classify the topic of a news article. \
                     Here are 4 classes ({world}/{sports}/{business}/{technology})."
                .into(),
            labels: vec![
                LabelSpec::new("0", "world"),
                LabelSpec::new("1", "sports"),
                LabelSpec::new("2", "business"),
                LabelSpec::new("3", "technology"),
            ],
            initial_prompt: "Classify the following news article.".into(),
            head: default_head(),
            interval: default_interval(),
            columns: vec!["text".into()],
            label_column: default_label_column(),
            canonical: false,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace(['-', '_', '\''], "").as_str() {
            "sst2" => Some(Self::sst2()),
            "rte" => Some(Self::rte()),
            "agnews" | "agsnews" => Some(Self::ag_news()),
            _ => None,
        }
    }

    pub fn label_words(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.word.clone()).collect()
    }

    pub fn is_pair_task(&self) -> bool {
        self.columns.len() == 2
    }

    pub fn validate(&self) -> Result<(), MetaPromptError> {
        let bad = |m: &str| Err(MetaPromptError::InvalidTask(format!("{}: {m}", self.name)));
        if self.labels.len() < 2 {
            return bad("at least two labels are required");
        }
        for (i, a) in self.labels.iter().enumerate() {
            if a.word.trim().is_empty() || a.id.is_empty() {
                return bad("label ids and words must be non-empty");
            }
            if self.labels[..i].iter().any(|b| b.word == a.word || b.id == a.id) {
                return bad("label ids and words must be distinct");
            }
        }
        if self.columns.is_empty() || self.columns.len() > 2 {
            return bad("one or two text columns are required");
        }
        if crate::engine::normalize_prompt(&self.initial_prompt).is_empty() {
            return bad("initial prompt is empty");
        }
        if self.i_task.trim().is_empty() {
            return bad("i_task is empty");
        }
        Ok(())
    }
}

/// Formats one parent line of the examples block.
pub fn format_parent(prompt: &str, score: f64) -> String {
    format!("{prompt} (score: {score:.4})")
}

/// Assembles the reproduction meta-prompt:
///
/// ```text
/// <i_task> <i_prompt> <i_rep>
/// <parent 1> (score: s1)
/// <parent 2> (score: s2)
/// <i_final> <i_additional>
/// ```
///
/// Parents appear in the given (draw) order.
pub fn build_meta_prompt(
    template: &MetaPromptTemplate,
    task: &TaskSpec,
    parents: &[Individual],
) -> Result<String, MetaPromptError> {
    if parents.is_empty() {
        return Err(MetaPromptError::NoParents);
    }
    let mut examples = Vec::with_capacity(parents.len());
    for p in parents {
        let score = p.fitness().ok_or(MetaPromptError::UnevaluatedParent(p.id()))?;
        examples.push(format_parent(p.prompt_text(), score));
    }
    Ok(format!(
        "{} {} {}\n{}\n{} {}",
        task.i_task,
        template.i_prompt,
        template.i_rep,
        examples.join("\n"),
        template.i_final,
        template.i_additional
    ))
}

/// Returns the trimmed contents of the last `{...}` pair in `raw`.
///
/// Earlier pairs (for instance in reasoning text) are ignored. Braces inside
/// the final pair, an empty pair, or a prompt over [`MAX_PROMPT_CHARS`] are
/// failures.
pub fn extract_prompt(raw: &str) -> Result<String, ExtractionError> {
    let close = raw.rfind('}').ok_or(ExtractionError::NoBracePair)?;
    let open = raw[..close].rfind('{').ok_or(ExtractionError::NoBracePair)?;
    let inner = &raw[open + 1..close];
    if inner.contains('}') {
        return Err(ExtractionError::NestedBraces);
    }
    let inner = inner.trim();
    if inner.is_empty() {
        return Err(ExtractionError::Empty);
    }
    let chars = inner.chars().count();
    if chars > MAX_PROMPT_CHARS {
        return Err(ExtractionError::TooLong(chars));
    }
    Ok(inner.to_string())
}
