//! Synthetic narratives built from real integer intervals.
//!
//! Events are added one at a time. Each new event is placed relative to a
//! randomly chosen earlier event (its *reference*) with a relation drawn
//! from [`RelationMix`], and the story mentions it as one clause such as
//! `ran before ate .`. Every interval is placed inside a single gap between
//! existing endpoints (or, for INCLUDES, straddling the reference inside
//! the gaps next to it), so the family stays laminar: any two events are
//! disjoint, nested, or identical, and the gold graph over all pairs uses
//! only the five relations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{relation_of_intervals, RelationGraph, RelationSet, TemporalRelation};
use crate::timeml::{AnnotatedDocument, EventSpan, TlinkRecord};

/// Trigger verbs, used in order. Vocabulary sizes beyond this list fall
/// back to `verbN`.
const VERBS: [&str; 32] = [
    "ate", "slept", "ran", "called", "left", "arrived", "cried", "laughed", "worked", "moved",
    "wrote", "read", "cooked", "walked", "waited", "studied", "argued", "paid", "drove", "swam",
    "sang", "danced", "fell", "won", "lost", "met", "shouted", "rested", "cleaned", "painted",
    "prayed", "travelled",
];

pub fn verb(i: usize) -> String {
    VERBS
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("verb{i}"))
}

/// Word linking a new event to its reference in the story text.
pub fn connective(r: TemporalRelation) -> &'static str {
    match r {
        TemporalRelation::Before => "before",
        TemporalRelation::After => "after",
        TemporalRelation::Includes => "throughout",
        TemporalRelation::IsIncluded => "during",
        TemporalRelation::Simultaneous => "while",
    }
}

/// Target proportions of clause relations, in [`TemporalRelation::ALL`]
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationMix {
    pub before: f64,
    pub after: f64,
    pub includes: f64,
    pub is_included: f64,
    pub simultaneous: f64,
}

impl Default for RelationMix {
    fn default() -> Self {
        RelationMix {
            before: 0.3,
            after: 0.3,
            includes: 0.1,
            is_included: 0.15,
            simultaneous: 0.15,
        }
    }
}

impl RelationMix {
    pub fn weights(&self) -> [f64; 5] {
        [
            self.before,
            self.after,
            self.includes,
            self.is_included,
            self.simultaneous,
        ]
    }

    /// Proportions normalized to sum to one.
    pub fn proportions(&self) -> [f64; 5] {
        let w = self.weights();
        let total: f64 = w.iter().sum();
        w.map(|x| x / total)
    }

    fn sample(&self, rng: &mut impl Rng) -> TemporalRelation {
        let p = self.proportions();
        let mut u: f64 = rng.gen();
        for (i, pi) in p.iter().enumerate() {
            if u < *pi {
                return TemporalRelation::ALL[i];
            }
            u -= pi;
        }
        TemporalRelation::Simultaneous
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeEvent {
    pub eid: String,
    pub trigger: String,
    pub start: i64,
    pub end: i64,
}

/// How an event entered the story: `event RELATION reference`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub event: usize,
    pub relation: TemporalRelation,
    pub reference: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticNarrative {
    pub doc_id: String,
    /// In mention order.
    pub events: Vec<NarrativeEvent>,
    /// One per event after the first.
    pub clauses: Vec<Clause>,
    /// Every pair, read off the intervals.
    pub gold: RelationGraph,
}

impl SyntheticNarrative {
    /// Story words: `e1 first .` then `eid new conn ref-eid .` per clause.
    /// Events carry their ids so questions can name them by id.
    pub fn story_words(&self) -> Vec<String> {
        let first = &self.events[0];
        let mut out = vec![first.eid.clone(), first.trigger.clone(), ".".into()];
        for c in &self.clauses {
            let e = &self.events[c.event];
            out.push(e.eid.clone());
            out.push(e.trigger.clone());
            out.push(connective(c.relation).into());
            out.push(self.events[c.reference].eid.clone());
            out.push(".".into());
        }
        out
    }

    /// Event indices in chronological order: by start, then end, then
    /// mention order.
    pub fn chronological_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.events.len()).collect();
        idx.sort_by_key(|&i| (self.events[i].start, self.events[i].end, i));
        idx
    }

    /// Only the clause relations, as a graph an annotator would produce.
    pub fn clause_graph(&self) -> RelationGraph {
        let mut g = RelationGraph::new(self.events.iter().map(|e| e.eid.clone()));
        for c in &self.clauses {
            g.set(c.event, c.reference, RelationSet::single(c.relation));
        }
        g
    }

    /// The story as an annotated document: each trigger wrapped as an
    /// event, the clause relations as temporal links.
    pub fn to_document(&self) -> AnnotatedDocument {
        let mut text = String::new();
        let mut spans = Vec::new();
        let mut push_event = |text: &mut String, i: usize| {
            let start = text.chars().count();
            text.push_str(&self.events[i].trigger);
            spans.push(EventSpan {
                eid: self.events[i].eid.clone(),
                class: "OCCURRENCE".into(),
                char_start: start,
                char_end: text.chars().count(),
                trigger_text: self.events[i].trigger.clone(),
            });
        };
        text.push_str("First they ");
        push_event(&mut text, 0);
        text.push('.');
        for c in &self.clauses {
            text.push_str(" They ");
            push_event(&mut text, c.event);
            text.push(' ');
            text.push_str(connective(c.relation));
            text.push_str(" they ");
            text.push_str(&self.events[c.reference].trigger);
            text.push('.');
        }
        let tlink_records = self
            .clauses
            .iter()
            .map(|c| TlinkRecord {
                source_eid: self.events[c.event].eid.clone(),
                target_eid: self.events[c.reference].eid.clone(),
                relation_label: c.relation.label().to_string(),
            })
            .collect();
        AnnotatedDocument {
            doc_id: self.doc_id.clone(),
            raw_text: text,
            event_spans: spans,
            tlink_records,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_docs: usize,
    pub events_per_doc: usize,
    /// Number of distinct trigger verbs available.
    pub vocab_size: usize,
    #[serde(default)]
    pub mix: RelationMix,
}

pub const MIN_EVENTS: usize = 2;
pub const MAX_EVENTS: usize = 7;

/// Endpoints of all placed intervals, sorted.
fn endpoints(events: &[(i64, i64)]) -> Vec<i64> {
    let mut e: Vec<i64> = events.iter().flat_map(|&(s, t)| [s, t]).collect();
    e.sort_unstable();
    e.dedup();
    e
}

/// Open gap `(lo, hi)` of free space just below `x` (exclusive).
fn gap_below(pts: &[i64], x: i64, pad: i64) -> (i64, i64) {
    let lo = pts.iter().copied().filter(|&p| p < x).max().unwrap_or(x - pad);
    (lo, x)
}

fn gap_above(pts: &[i64], x: i64, pad: i64) -> (i64, i64) {
    let hi = pts.iter().copied().filter(|&p| p > x).min().unwrap_or(x + pad);
    (x, hi)
}

/// Two points strictly inside `(lo, hi)`, at the thirds.
fn inside(lo: i64, hi: i64) -> (i64, i64) {
    let w = hi - lo;
    (lo + w / 3, lo + 2 * w / 3)
}

fn place(
    placed: &[(i64, i64)],
    reference: (i64, i64),
    r: TemporalRelation,
) -> Option<(i64, i64)> {
    let pts = endpoints(placed);
    let pad = 64;
    let wide = |g: (i64, i64)| g.1 - g.0 >= 3;
    match r {
        TemporalRelation::Before => {
            let g = gap_below(&pts, reference.0, pad);
            wide(g).then(|| inside(g.0, g.1))
        }
        TemporalRelation::After => {
            let g = gap_above(&pts, reference.1, pad);
            wide(g).then(|| inside(g.0, g.1))
        }
        TemporalRelation::IsIncluded => {
            let g = gap_above(&pts, reference.0, pad);
            wide(g).then(|| inside(g.0, g.1))
        }
        TemporalRelation::Includes => {
            let a = gap_below(&pts, reference.0, pad);
            let b = gap_above(&pts, reference.1, pad);
            let mid = |g: (i64, i64)| g.0 + (g.1 - g.0) / 2;
            (a.1 - a.0 >= 2 && b.1 - b.0 >= 2).then(|| (mid(a), mid(b)))
        }
        TemporalRelation::Simultaneous => Some(reference),
    }
}

fn generate_one(rng: &mut ChaCha8Rng, doc_id: String, spec: &CorpusSpec) -> SyntheticNarrative {
    let n = spec.events_per_doc;
    let mut verbs: Vec<usize> = (0..spec.vocab_size).collect();
    verbs.shuffle(rng);
    let mut spans: Vec<(i64, i64)> = vec![(0, 1024)];
    let mut clauses = Vec::with_capacity(n - 1);
    for e in 1..n {
        let reference = rng.gen_range(0..e);
        let relation = spec.mix.sample(rng);
        let span = loop {
            if let Some(s) = place(&spans, spans[reference], relation) {
                break s;
            }
            for s in &mut spans {
                *s = (s.0 * 4, s.1 * 4);
            }
        };
        spans.push(span);
        clauses.push(Clause {
            event: e,
            relation,
            reference,
        });
    }
    let events: Vec<NarrativeEvent> = spans
        .iter()
        .enumerate()
        .map(|(i, &(start, end))| NarrativeEvent {
            eid: format!("e{}", i + 1),
            trigger: verb(verbs[i]),
            start,
            end,
        })
        .collect();
    let mut gold = RelationGraph::new(events.iter().map(|e| e.eid.clone()));
    for i in 0..n {
        for j in (i + 1)..n {
            let r = relation_of_intervals(spans[i], spans[j])
                .expect("laminar placement yields one of the five relations");
            gold.set(i, j, RelationSet::single(r));
        }
    }
    SyntheticNarrative {
        doc_id,
        events,
        clauses,
        gold,
    }
}

/// Deterministic in `seed`. Panics if `events_per_doc` is outside
/// `2..=7` or exceeds `vocab_size`.
pub fn gen_synthetic_corpus(
    seed: u64,
    n_docs: usize,
    events_per_doc: usize,
    vocab_size: usize,
) -> Vec<SyntheticNarrative> {
    gen_corpus(
        seed,
        &CorpusSpec {
            n_docs,
            events_per_doc,
            vocab_size,
            mix: RelationMix::default(),
        },
    )
}

pub fn gen_corpus(seed: u64, spec: &CorpusSpec) -> Vec<SyntheticNarrative> {
    assert!(
        (MIN_EVENTS..=MAX_EVENTS).contains(&spec.events_per_doc),
        "events_per_doc must be in {MIN_EVENTS}..={MAX_EVENTS}"
    );
    assert!(
        spec.vocab_size >= spec.events_per_doc,
        "vocab_size must cover events_per_doc distinct triggers"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.n_docs)
        .map(|i| generate_one(&mut rng, format!("syn{i:05}"), spec))
        .collect()
}

/// Clause-relation counts in [`TemporalRelation::ALL`] order.
pub fn clause_histogram(corpus: &[SyntheticNarrative]) -> [usize; 5] {
    let mut h = [0; 5];
    for d in corpus {
        for c in &d.clauses {
            h[c.relation.index()] += 1;
        }
    }
    h
}
