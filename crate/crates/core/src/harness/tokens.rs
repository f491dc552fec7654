//! Closed vocabulary shared by teacher and student, and the two sequence
//! formats: relation QA and timeline ordering.

use std::collections::HashMap;

use crate::algebra::TemporalRelation;
use crate::timeml::tokenize;

use super::corpus::{connective, verb, SyntheticNarrative, MAX_EVENTS};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const QUESTION: &str = "<q>";
pub const ANSWER: &str = "<ans>";
pub const ORDER: &str = "<ord>";

/// Task prefixes used when both tasks share one model.
pub const TIMELINE_PROMPT: &str =
    "This is a timeline summarization task, your task is to summarize the provided timeline";
pub const TEMPORAL_PROMPT: &str =
    "This is a temporal reasoning task, your task is to answer the question based on the provided text";

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    labels: [usize; 5],
}

impl Vocab {
    pub fn new(n_verbs: usize) -> Self {
        let mut v = Vocab {
            words: Vec::new(),
            index: HashMap::new(),
            labels: [0; 5],
        };
        for w in [BOS, EOS, QUESTION, ANSWER, ORDER, "."] {
            v.intern(w);
        }
        for r in TemporalRelation::ALL {
            v.intern(connective(r));
        }
        for r in TemporalRelation::ALL {
            v.labels[r.index()] = v.intern(r.label());
        }
        for prompt in [TIMELINE_PROMPT, TEMPORAL_PROMPT] {
            for t in tokenize(prompt) {
                v.intern(&t.text);
            }
        }
        for i in 1..=MAX_EVENTS {
            v.intern(&format!("e{i}"));
        }
        for i in 0..n_verbs {
            v.intern(&verb(i));
        }
        v
    }

    fn intern(&mut self, w: &str) -> usize {
        if let Some(&i) = self.index.get(w) {
            return i;
        }
        self.words.push(w.to_string());
        self.index.insert(w.to_string(), self.words.len() - 1);
        self.words.len() - 1
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, w: &str) -> usize {
        *self
            .index
            .get(w)
            .unwrap_or_else(|| panic!("{w:?} is not in the vocabulary"))
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn label_id(&self, r: TemporalRelation) -> usize {
        self.labels[r.index()]
    }

    pub fn label_ids(&self) -> [usize; 5] {
        self.labels
    }

    fn prompt(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id(&t.text)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Temporal,
    Ordering,
}

/// A training sequence and the positions whose next token is supervised.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub tokens: Vec<usize>,
    /// `(position, expected next token)`.
    pub targets: Vec<(usize, usize)>,
    pub kind: TaskKind,
    /// For QA: position whose next token is the relation label.
    pub label_pos: Option<usize>,
    pub label: Option<TemporalRelation>,
}

impl Example {
    /// Tokens up to and including the last prompt token.
    pub fn prompt(&self) -> &[usize] {
        &self.tokens[..=self.targets[0].0]
    }
}

fn story(vocab: &Vocab, doc: &SyntheticNarrative) -> Vec<usize> {
    doc.story_words().iter().map(|w| vocab.id(w)).collect()
}

fn finish(prefix: Vec<usize>, answer: &[usize]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut tokens = prefix;
    let mut targets = Vec::with_capacity(answer.len());
    for &a in answer {
        targets.push((tokens.len() - 1, a));
        tokens.push(a);
    }
    (tokens, targets)
}

/// `<bos> [prompt] <q> a b story <ans>` then `a LABEL b <eos>`, with events
/// named by id. The question precedes the story, as in the dataset template.
pub fn qa_example(
    vocab: &Vocab,
    doc: &SyntheticNarrative,
    a: usize,
    b: usize,
    relation: TemporalRelation,
    prompted: bool,
) -> Example {
    let va = vocab.id(&doc.events[a].eid);
    let vb = vocab.id(&doc.events[b].eid);
    let mut prefix = vec![vocab.id(BOS)];
    if prompted {
        prefix.extend(vocab.prompt(TEMPORAL_PROMPT));
    }
    prefix.extend([vocab.id(QUESTION), va, vb]);
    prefix.extend(story(vocab, doc));
    prefix.push(vocab.id(ANSWER));
    let (tokens, targets) = finish(
        prefix,
        &[va, vocab.label_id(relation), vb, vocab.id(EOS)],
    );
    Example {
        label_pos: Some(targets[1].0),
        label: Some(relation),
        tokens,
        targets,
        kind: TaskKind::Temporal,
    }
}

/// `<bos> [prompt] <ord> story <ans>` then the triggers chronologically and
/// `<eos>`.
pub fn ordering_example(vocab: &Vocab, doc: &SyntheticNarrative, prompted: bool) -> Example {
    let mut answer: Vec<usize> = doc
        .chronological_order()
        .iter()
        .map(|&i| vocab.id(&doc.events[i].trigger))
        .collect();
    answer.push(vocab.id(EOS));
    let (tokens, targets) = finish(ordering_prompt(vocab, doc, prompted), &answer);
    Example {
        tokens,
        targets,
        kind: TaskKind::Ordering,
        label_pos: None,
        label: None,
    }
}

pub fn ordering_prompt(vocab: &Vocab, doc: &SyntheticNarrative, prompted: bool) -> Vec<usize> {
    let mut prefix = vec![vocab.id(BOS)];
    if prompted {
        prefix.extend(vocab.prompt(TIMELINE_PROMPT));
    }
    prefix.push(vocab.id(ORDER));
    prefix.extend(story(vocab, doc));
    prefix.push(vocab.id(ANSWER));
    prefix
}

/// QA examples for every ordered pair whose relation the story's clauses
/// entail (a single relation after path consistency).
pub fn qa_examples(vocab: &Vocab, doc: &SyntheticNarrative, prompted: bool) -> Vec<Example> {
    let closed = crate::algebra::propagate(&doc.clause_graph())
        .expect("clauses come from real intervals");
    let n = doc.events.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            if let Some(r) = closed.get(a, b).as_single() {
                out.push(qa_example(vocab, doc, a, b, r, prompted));
            }
        }
    }
    out
}

/// Longest sequence either format can produce for `events` events.
pub fn max_sequence_len(events: usize) -> usize {
    let story = 3 + 5 * (events - 1);
    let prompt = tokenize(TEMPORAL_PROMPT)
        .len()
        .max(tokenize(TIMELINE_PROMPT).len());
    let qa = 3 + story + 1 + 4;
    let ordering = 1 + story + 1 + events + 1;
    1 + prompt + qa.max(ordering)
}
