//! Question/answer pairs over event pairs of a narrative.
//!
//! Each pair asks for the temporal relation between two events of one story
//! and answers with a single relation label. Events are rendered as their
//! `<subject, predicate, object>` triple.

use std::collections::{BTreeMap, HashSet};
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{propagate, AlgebraError, RelationGraph, TemporalRelation};
use crate::tensor_io::write_atomic;
use crate::timeml::{extract_events, AnnotatedDocument, Event, EventTriple};

/// Recorded in every manifest so downstream consumers can tell template
/// revisions apart.
pub const TEMPLATE_VERSION: &str = "narrative-qa/triple-v1";

#[derive(Debug, Error)]
pub enum QaError {
    #[error("cannot pair event {0:?} with itself")]
    SameEvent(String),
    #[error("document {doc_id} is inconsistent: {source}")]
    InconsistentDocument {
        doc_id: String,
        #[source]
        source: AlgebraError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub doc_id: String,
    pub question: String,
    pub answer: String,
    pub relation: TemporalRelation,
    pub source_eid: String,
    pub target_eid: String,
}

fn mention(t: &EventTriple) -> String {
    format!("<{}, {}, {}>", t.subject, t.predicate, t.object)
}

/// Renders the question and answer for `r(a, b)`.
pub fn render_pair(
    story: &str,
    a: &Event,
    b: &Event,
    r: TemporalRelation,
) -> Result<QaPair, QaError> {
    if a.eid == b.eid && a.doc_id == b.doc_id {
        return Err(QaError::SameEvent(a.eid.clone()));
    }
    let (ma, mb) = (mention(&a.triple), mention(&b.triple));
    Ok(QaPair {
        id: format!("{}:{}:{}", a.doc_id, a.eid, b.eid),
        doc_id: a.doc_id.clone(),
        question: format!(
            "your task is to identify the temporal relation between {ma} and {mb}: based on the Story: {story}"
        ),
        answer: format!("Event {ma} is {} Event {mb}", r.label()),
        relation: r,
        source_eid: a.eid.clone(),
        target_eid: b.eid.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Emit every pair whose relation is determined after path consistency,
    /// instead of only the annotated links.
    pub closure: bool,
    /// Also emit the reversed pair with the inverted relation.
    pub bidirectional: bool,
    /// Drop pairs where either event has an empty subject or object.
    pub filter_empty_args: bool,
    pub seed: u64,
    /// Token window for triple extraction.
    pub window: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            closure: false,
            bidirectional: false,
            filter_empty_args: false,
            seed: 0,
            window: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedDocument {
    pub doc_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub template_version: String,
    pub n_docs: usize,
    pub n_events: usize,
    pub n_pairs: usize,
    pub seed: u64,
    pub closure: bool,
    pub bidirectional: bool,
    pub filter_empty_args: bool,
    pub window: usize,
    pub splits: BTreeMap<String, Split>,
    pub pairs_per_doc: BTreeMap<String, usize>,
    pub skipped_documents: Vec<SkippedDocument>,
    /// Pairs left out because their relation set was not a singleton.
    pub skipped_ambiguous: usize,
    pub skipped_empty_args: usize,
}

struct DocOutcome {
    pairs: Vec<QaPair>,
    ambiguous: usize,
    empty_args: usize,
}

fn document_graph(doc: &AnnotatedDocument, events: &[Event]) -> Result<RelationGraph, AlgebraError> {
    let mut g = RelationGraph::new(events.iter().map(|e| e.eid.clone()));
    for l in &doc.tlink_records {
        let r: TemporalRelation = l.relation_label.parse()?;
        g.add_relation(&l.source_eid, &l.target_eid, r)?;
    }
    Ok(g)
}

fn build_document(doc: &AnnotatedDocument, opts: &BuildOptions) -> Result<DocOutcome, QaError> {
    let inconsistent = |source| QaError::InconsistentDocument {
        doc_id: doc.doc_id.clone(),
        source,
    };
    let events = extract_events(doc, opts.window);
    let graph = document_graph(doc, &events).map_err(inconsistent)?;
    // Both modes reject contradictory annotations; closure also tightens.
    let closed = propagate(&graph).map_err(inconsistent)?;
    let graph = if opts.closure { closed } else { graph };

    let mut ordered: Vec<(usize, usize)> = Vec::new();
    if opts.closure {
        for i in 0..events.len() {
            for j in (i + 1)..events.len() {
                ordered.push((i, j));
            }
        }
    } else {
        let mut seen = HashSet::new();
        for l in &doc.tlink_records {
            let i = graph.index_of(&l.source_eid).expect("validated eid");
            let j = graph.index_of(&l.target_eid).expect("validated eid");
            if i != j && seen.insert((i.min(j), i.max(j))) {
                ordered.push((i, j));
            }
        }
    }

    let mut out = DocOutcome {
        pairs: Vec::new(),
        ambiguous: 0,
        empty_args: 0,
    };
    for (i, j) in ordered {
        let Some(r) = graph.get(i, j).as_single() else {
            out.ambiguous += if opts.bidirectional { 2 } else { 1 };
            continue;
        };
        let (a, b) = (&events[i], &events[j]);
        if opts.filter_empty_args && (a.triple.has_empty_argument() || b.triple.has_empty_argument())
        {
            out.empty_args += if opts.bidirectional { 2 } else { 1 };
            continue;
        }
        out.pairs.push(render_pair(&doc.raw_text, a, b, r)?);
        if opts.bidirectional {
            out.pairs.push(render_pair(&doc.raw_text, b, a, r.invert())?);
        }
    }
    Ok(out)
}

/// Seeded 80/10/10 document-level split.
pub fn split_documents(doc_ids: &[String], seed: u64) -> BTreeMap<String, Split> {
    let mut ids: Vec<String> = doc_ids.to_vec();
    ids.sort();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len();
    let n_train = (n as f64 * 0.8).round() as usize;
    let n_dev = ((n as f64 * 0.1).round() as usize).min(n - n_train);
    ids.into_iter()
        .enumerate()
        .map(|(k, id)| {
            let split = if k < n_train {
                Split::Train
            } else if k < n_train + n_dev {
                Split::Dev
            } else {
                Split::Test
            };
            (id, split)
        })
        .collect()
}

/// Renders the dataset for a corpus. Inconsistent documents are skipped and
/// listed in the manifest. Pairs are ordered by
/// `(doc_id, source_eid, target_eid)`.
pub fn build_dataset(
    corpus: &[AnnotatedDocument],
    opts: &BuildOptions,
) -> (Vec<QaPair>, DatasetManifest) {
    let outcomes: Vec<(String, Result<DocOutcome, QaError>)> = corpus
        .par_iter()
        .map(|doc| (doc.doc_id.clone(), build_document(doc, opts)))
        .collect();

    let doc_ids: Vec<String> = corpus.iter().map(|d| d.doc_id.clone()).collect();
    let mut manifest = DatasetManifest {
        template_version: TEMPLATE_VERSION.to_string(),
        n_docs: corpus.len(),
        n_events: corpus.iter().map(|d| d.event_spans.len()).sum(),
        n_pairs: 0,
        seed: opts.seed,
        closure: opts.closure,
        bidirectional: opts.bidirectional,
        filter_empty_args: opts.filter_empty_args,
        window: opts.window,
        splits: split_documents(&doc_ids, opts.seed),
        pairs_per_doc: BTreeMap::new(),
        skipped_documents: Vec::new(),
        skipped_ambiguous: 0,
        skipped_empty_args: 0,
    };
    let mut pairs = Vec::new();
    for (doc_id, outcome) in outcomes {
        match outcome {
            Ok(o) => {
                manifest.skipped_ambiguous += o.ambiguous;
                manifest.skipped_empty_args += o.empty_args;
                manifest.pairs_per_doc.insert(doc_id, o.pairs.len());
                pairs.extend(o.pairs);
            }
            Err(e) => {
                log::warn!("skipping document {doc_id}: {e}");
                manifest.skipped_documents.push(SkippedDocument {
                    doc_id,
                    reason: e.to_string(),
                });
            }
        }
    }
    manifest.skipped_documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    pairs.sort_by(|a, b| {
        (&a.doc_id, &a.source_eid, &a.target_eid).cmp(&(&b.doc_id, &b.source_eid, &b.target_eid))
    });
    manifest.n_pairs = pairs.len();
    (pairs, manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_pairs: usize,
    pub histogram: BTreeMap<TemporalRelation, usize>,
    pub per_doc: BTreeMap<String, usize>,
}

pub fn dataset_stats(pairs: &[QaPair]) -> DatasetStats {
    let mut histogram: BTreeMap<TemporalRelation, usize> =
        TemporalRelation::ALL.iter().map(|&r| (r, 0)).collect();
    let mut per_doc = BTreeMap::new();
    for p in pairs {
        *histogram.entry(p.relation).or_default() += 1;
        *per_doc.entry(p.doc_id.clone()).or_default() += 1;
    }
    DatasetStats {
        n_pairs: pairs.len(),
        histogram,
        per_doc,
    }
}

/// One JSON object per line.
pub fn dataset_to_jsonl(pairs: &[QaPair]) -> Result<String, QaError> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn dataset_from_jsonl(text: &str) -> Result<Vec<QaPair>, QaError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(QaError::from))
        .collect()
}

/// Writes the dataset and its manifest atomically.
pub fn write_dataset(
    pairs: &[QaPair],
    manifest: &DatasetManifest,
    dataset_path: &Path,
    manifest_path: &Path,
) -> Result<(), QaError> {
    let data = dataset_to_jsonl(pairs)?;
    let mut man = serde_json::to_string_pretty(manifest)?;
    man.push('\n');
    write_atomic(dataset_path, data.as_bytes())?;
    write_atomic(manifest_path, man.as_bytes())?;
    Ok(())
}
