use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_events, AnnotatedDocument};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocReport {
    pub doc_id: String,
    pub n_events: usize,
    pub n_tlinks: usize,
    pub n_empty_args: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub docs: Vec<DocReport>,
    pub total_docs: usize,
    pub total_events: usize,
    pub total_tlinks: usize,
    pub total_empty_args: usize,
}

impl CorpusReport {
    /// Tab-separated, one record per document, totals as a trailing comment.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("doc_id\tn_events\tn_tlinks\tn_empty_args\n");
        for d in &self.docs {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                d.doc_id, d.n_events, d.n_tlinks, d.n_empty_args
            );
        }
        let _ = writeln!(
            out,
            "# total docs={} events={} tlinks={} empty_args={}",
            self.total_docs, self.total_events, self.total_tlinks, self.total_empty_args
        );
        out
    }
}

/// Per-document counts, sorted by document id regardless of input order.
pub fn validate_corpus(docs: &[AnnotatedDocument], window: usize) -> CorpusReport {
    let mut per_doc: Vec<DocReport> = docs
        .par_iter()
        .map(|doc| {
            let events = extract_events(doc, window);
            DocReport {
                doc_id: doc.doc_id.clone(),
                n_events: events.len(),
                n_tlinks: doc.tlink_records.len(),
                n_empty_args: events
                    .iter()
                    .filter(|e| e.triple.has_empty_argument())
                    .count(),
            }
        })
        .collect();
    per_doc.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    CorpusReport {
        total_docs: per_doc.len(),
        total_events: per_doc.iter().map(|d| d.n_events).sum(),
        total_tlinks: per_doc.iter().map(|d| d.n_tlinks).sum(),
        total_empty_args: per_doc.iter().map(|d| d.n_empty_args).sum(),
        docs: per_doc,
    }
}
