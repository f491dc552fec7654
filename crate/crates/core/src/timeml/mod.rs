//! Narrative documents with inline `EVENT` annotations and sidecar
//! temporal links.
//!
//! Input grammar: UTF-8 text where event triggers are wrapped as
//! `<EVENT class="OCCURRENCE" eid="e7">fallen</EVENT>`. Other tags are
//! stripped (their inner text is kept). Temporal links come either from a
//! tab-separated sidecar file with columns `doc_id source_eid relation
//! target_eid`, or from inline self-closing `<TLINK .../>` tags.
//!
//! Offsets in [`EventSpan`] count Unicode scalar values in the stripped text.

mod extract;
mod markup;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract_events, tokenize, Event, EventTriple, Token, AUXILIARIES};
pub use markup::{parse_document, parse_relation_table, to_markup, to_relation_table};
pub use report::{validate_corpus, CorpusReport, DocReport};

/// File name of the sidecar relation table inside a corpus directory.
pub const RELATION_FILE: &str = "relations.tsv";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{doc_id}: malformed markup at char {offset}: {msg}")]
    MalformedMarkup {
        doc_id: String,
        offset: usize,
        msg: String,
    },
    #[error("{doc_id}: duplicate eid {eid:?}")]
    DuplicateEid { doc_id: String, eid: String },
    #[error("{doc_id}: temporal link references unknown eid {eid:?}")]
    DanglingTlink { doc_id: String, eid: String },
    #[error("{doc_id}: unknown relation label {label:?}")]
    UnknownRelation { doc_id: String, label: String },
    #[error("relation table line {line}: {msg}")]
    BadRelationLine { line: usize, msg: String },
    #[error("relation table references unknown document {0:?}")]
    UnknownDocument(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpan {
    pub eid: String,
    pub class: String,
    pub char_start: usize,
    pub char_end: usize,
    pub trigger_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlinkRecord {
    pub source_eid: String,
    pub target_eid: String,
    pub relation_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub doc_id: String,
    pub raw_text: String,
    pub event_spans: Vec<EventSpan>,
    pub tlink_records: Vec<TlinkRecord>,
}

impl AnnotatedDocument {
    /// The substring of `raw_text` between two char offsets.
    pub fn slice_chars(&self, start: usize, end: usize) -> String {
        self.raw_text
            .chars()
            .skip(start)
            .take(end.saturating_sub(start))
            .collect()
    }

    pub fn span(&self, eid: &str) -> Option<&EventSpan> {
        self.event_spans.iter().find(|s| s.eid == eid)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads every `*.txt` / `*.tml` file in `dir` (document id = file stem)
/// plus the optional [`RELATION_FILE`] sidecar. Documents come back sorted by
/// id.
pub fn load_corpus(dir: &Path) -> Result<Vec<AnnotatedDocument>, CorpusError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_error(dir, e))? {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        let is_doc = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e == "txt" || e == "tml");
        if is_doc && path.is_file() {
            files.push(path);
        }
    }
    files.sort();

    let sidecar_path = dir.join(RELATION_FILE);
    let mut sidecar: BTreeMap<String, Vec<TlinkRecord>> = if sidecar_path.exists() {
        let text = fs::read_to_string(&sidecar_path).map_err(|e| io_error(&sidecar_path, e))?;
        parse_relation_table(&text)?
    } else {
        BTreeMap::new()
    };

    let sources: Vec<(String, String, Vec<TlinkRecord>)> = files
        .iter()
        .map(|p| {
            let doc_id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let text = fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            let links = sidecar.remove(&doc_id).unwrap_or_default();
            Ok((doc_id, text, links))
        })
        .collect::<Result<_, CorpusError>>()?;
    if let Some(doc_id) = sidecar.keys().next() {
        return Err(CorpusError::UnknownDocument(doc_id.clone()));
    }

    sources
        .into_par_iter()
        .map(|(doc_id, text, links)| parse_document(&doc_id, &text, &links))
        .collect()
}
