//! Verb-triggered relation triples.
//!
//! The argument heuristic is deterministic and deliberately simple:
//!
//! * auxiliaries directly left of the trigger join the predicate
//!   (`has fallen`);
//! * the subject is the run of tokens left of that, up to `window` tokens
//!   away from the trigger, stopping at punctuation, auxiliaries and other
//!   triggers;
//! * the object is the same run to the right.
//!
//! Arguments that cannot be recovered are empty strings and counted by the
//! corpus report.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::AnnotatedDocument;

pub const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "has", "have", "had", "having", "do",
    "does", "did", "will", "would", "shall", "should", "can", "could", "may", "might", "must",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    fn is_punct(&self) -> bool {
        !self.text.chars().any(char::is_alphanumeric)
    }

    fn is_aux(&self) -> bool {
        AUXILIARIES
            .iter()
            .any(|a| a.eq_ignore_ascii_case(&self.text))
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '\'' | '-' | '%' | '$')
}

/// Whitespace and punctuation splitting. Offsets are char indices.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut cur_start = 0;
    for (i, c) in text.chars().enumerate() {
        if is_word_char(c) {
            if cur.is_empty() {
                cur_start = i;
            }
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            out.push(Token {
                text: std::mem::take(&mut cur),
                start: cur_start,
                end: i,
            });
        }
        if !c.is_whitespace() {
            out.push(Token {
                text: c.to_string(),
                start: i,
                end: i + 1,
            });
        }
    }
    if !cur.is_empty() {
        let end = cur_start + cur.chars().count();
        out.push(Token {
            text: cur,
            start: cur_start,
            end,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl EventTriple {
    pub fn has_empty_argument(&self) -> bool {
        self.subject.is_empty() || self.object.is_empty()
    }
}

impl fmt::Display for EventTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}>", self.subject, self.predicate, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub eid: String,
    pub doc_id: String,
    pub trigger: String,
    pub event_class: String,
    pub triple: EventTriple,
}

/// One [`Event`] per event span, in document order of the spans.
pub fn extract_events(doc: &AnnotatedDocument, window: usize) -> Vec<Event> {
    let tokens = tokenize(&doc.raw_text);
    let chars: Vec<char> = doc.raw_text.chars().collect();
    let text_of = |a: usize, b: usize| -> String { chars[a..b].iter().collect() };

    // Token index ranges covered by each trigger.
    let trigger_ranges: Vec<(usize, usize)> = doc
        .event_spans
        .iter()
        .map(|s| {
            let first = tokens.iter().position(|t| t.end > s.char_start);
            let last = tokens.iter().rposition(|t| t.start < s.char_end);
            match (first, last) {
                (Some(f), Some(l)) if f <= l => (f, l),
                _ => (usize::MAX, usize::MAX),
            }
        })
        .collect();
    let in_trigger = |k: usize| trigger_ranges.iter().any(|&(f, l)| f <= k && k <= l);
    let blocks = |t: &Token, k: usize| t.is_punct() || t.is_aux() || in_trigger(k);

    doc.event_spans
        .iter()
        .zip(&trigger_ranges)
        .map(|(span, &(first, last))| {
            let mut triple = EventTriple {
                subject: String::new(),
                predicate: span.trigger_text.clone(),
                object: String::new(),
            };
            if first != usize::MAX {
                let lo = first.saturating_sub(window);
                let mut k = first;
                while k > lo && tokens[k - 1].is_aux() {
                    k -= 1;
                }
                let pred_start = k;
                let subj_end = k;
                while k > lo && !blocks(&tokens[k - 1], k - 1) {
                    k -= 1;
                }
                if k < subj_end {
                    triple.subject = text_of(tokens[k].start, tokens[subj_end - 1].end);
                }
                triple.predicate = text_of(tokens[pred_start].start, span.char_end);

                let hi = (last + window).min(tokens.len() - 1);
                let mut k = last;
                while k < hi && !blocks(&tokens[k + 1], k + 1) {
                    k += 1;
                }
                if k > last {
                    triple.object = text_of(tokens[last + 1].start, tokens[k].end);
                }
            }
            Event {
                eid: span.eid.clone(),
                doc_id: doc.doc_id.clone(),
                trigger: span.trigger_text.clone(),
                event_class: span.class.clone(),
                triple,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeml::parse_document;

    fn triple(text: &str, window: usize) -> Vec<(String, String, String)> {
        let doc = parse_document("d", text, &[]).unwrap();
        extract_events(&doc, window)
            .into_iter()
            .map(|e| (e.triple.subject, e.triple.predicate, e.triple.object))
            .collect()
    }

    fn t(s: &str, p: &str, o: &str) -> (String, String, String) {
        (s.into(), p.into(), o.into())
    }

    #[test]
    fn stock_market_sentence() {
        let text = "the value of the Indonesian stock market has \
            <EVENT class=\"OCCURRENCE\" eid=\"e7\">fallen</EVENT> by twelve percent";
        assert_eq!(
            triple(text, 8),
            vec![t(
                "the value of the Indonesian stock market",
                "has fallen",
                "by twelve percent"
            )]
        );
    }

    #[test]
    fn trigger_at_start_has_no_subject() {
        let got = triple("<EVENT eid=\"e1\">Rain</EVENT> fell.", 4);
        assert_eq!(got, vec![t("", "Rain", "fell")]);
    }

    /// Hand-checked expectations on a small synthetic corpus.
    #[test]
    fn synthetic_sentences() {
        let cases: &[(&str, usize, (&str, &str, &str))] = &[
            ("A <EVENT eid=\"e\">ate</EVENT> B", 2, ("A", "ate", "B")),
            ("the dog <EVENT eid=\"e\">ate</EVENT> the bone.", 2, ("the dog", "ate", "the bone")),
            ("the big dog <EVENT eid=\"e\">ate</EVENT> the bone", 2, ("big dog", "ate", "the bone")),
            ("Then, prices <EVENT eid=\"e\">rose</EVENT> sharply; traders cheered", 5, ("prices", "rose", "sharply")),
            ("She had <EVENT eid=\"e\">left</EVENT> early", 3, ("She", "had left", "early")),
            ("They will have <EVENT eid=\"e\">gone</EVENT> home", 4, ("They", "will have gone", "home")),
            ("Markets <EVENT eid=\"e\">fell</EVENT>.", 3, ("Markets", "fell", "")),
            ("He <EVENT eid=\"e\">said</EVENT> it <EVENT eid=\"f\">rained</EVENT> hard", 3, ("He", "said", "it")),
            ("Officials <EVENT eid=\"e\">Announced</EVENT> a 12% cut", 3, ("Officials", "Announced", "a 12% cut")),
            ("Is he <EVENT eid=\"e\">coming</EVENT>?", 3, ("he", "coming", "")),
        ];
        for (text, window, (s, p, o)) in cases {
            let got = triple(text, *window);
            assert_eq!(got[0], t(s, p, o), "{text}");
        }
    }

    #[test]
    fn window_limits_arguments() {
        let got = triple("one two three four <EVENT eid=\"e\">x</EVENT> five six seven", 2);
        assert_eq!(got, vec![t("three four", "x", "five six")]);
    }

    #[test]
    fn tokenizer_offsets() {
        let toks = tokenize("It's 12%, ok?");
        let texts: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["It's", "12%", ",", "ok", "?"]);
        assert_eq!((toks[1].start, toks[1].end), (5, 8));
    }
}
