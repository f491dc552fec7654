use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use super::{AnnotatedDocument, CorpusError, EventSpan, TlinkRecord};
use crate::algebra::TemporalRelation;

struct Tag {
    name: String,
    closing: bool,
    self_closing: bool,
    attrs: Vec<(String, String)>,
}

impl Tag {
    fn attr(&self, keys: &[&str]) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| keys.iter().any(|key| k.eq_ignore_ascii_case(key)))
            .map(|(_, v)| v.as_str())
    }
}

fn parse_tag(body: &str) -> Result<Tag, String> {
    let body = body.trim();
    let (closing, body) = match body.strip_prefix('/') {
        Some(rest) => (true, rest.trim_start()),
        None => (false, body),
    };
    let (self_closing, body) = match body.strip_suffix('/') {
        Some(rest) => (true, rest.trim_end()),
        None => (false, body),
    };
    let name_end = body
        .find(|c: char| c.is_whitespace())
        .unwrap_or(body.len());
    let name = &body[..name_end];
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || "_-:".contains(c)) {
        return Err(format!("bad tag name {name:?}"));
    }
    let mut attrs = Vec::new();
    let mut rest = body[name_end..].trim_start();
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| format!("attribute without value in <{body}>"))?;
        let key = rest[..eq].trim();
        let after = rest[eq + 1..].trim_start();
        let quote = after
            .chars()
            .next()
            .filter(|c| *c == '"' || *c == '\'')
            .ok_or_else(|| format!("unquoted attribute {key:?}"))?;
        let close = after[1..]
            .find(quote)
            .ok_or_else(|| format!("unterminated attribute {key:?}"))?;
        attrs.push((key.to_string(), unescape(&after[1..1 + close])));
        rest = after[close + 2..].trim_start();
    }
    Ok(Tag {
        name: name.to_string(),
        closing,
        self_closing,
        attrs,
    })
}

fn unescape(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn escape_attr(s: &str) -> String {
    escape_text(s).replace('"', "&quot;")
}

/// Reads an entity starting at `chars[i] == '&'`; returns the decoded char
/// and the number of chars consumed.
fn entity_at(chars: &[char], i: usize) -> Option<(char, usize)> {
    const ENTITIES: [(&str, char); 5] = [
        ("&lt;", '<'),
        ("&gt;", '>'),
        ("&amp;", '&'),
        ("&quot;", '"'),
        ("&apos;", '\''),
    ];
    ENTITIES.iter().find_map(|(pat, c)| {
        let n = pat.chars().count();
        (chars.len() >= i + n && chars[i..i + n].iter().copied().eq(pat.chars()))
            .then_some((*c, n))
    })
}

/// Parses one annotated document. `sidecar` holds temporal links for this
/// document from the relation table; inline `TLINK` tags are appended after
/// them.
pub fn parse_document(
    doc_id: &str,
    text: &str,
    sidecar: &[TlinkRecord],
) -> Result<AnnotatedDocument, CorpusError> {
    let malformed = |offset: usize, msg: String| CorpusError::MalformedMarkup {
        doc_id: doc_id.to_string(),
        offset,
        msg,
    };
    let chars: Vec<char> = text.chars().collect();
    let mut raw: Vec<char> = Vec::with_capacity(chars.len());
    let mut spans: Vec<EventSpan> = Vec::new();
    let mut links: Vec<TlinkRecord> = sidecar.to_vec();
    // (eid, class, start offset in raw, position in input) of an open EVENT.
    let mut open: Option<(String, String, usize, usize)> = None;

    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '<' => {
                let close = chars[i..]
                    .iter()
                    .position(|&c| c == '>')
                    .ok_or_else(|| malformed(i, "unclosed tag".into()))?;
                let body: String = chars[i + 1..i + close].iter().collect();
                if body.starts_with('!') || body.starts_with('?') {
                    i += close + 1;
                    continue;
                }
                let tag = parse_tag(&body).map_err(|m| malformed(i, m))?;
                if tag.name.eq_ignore_ascii_case("EVENT") {
                    if tag.closing {
                        let (eid, class, start, _) = open
                            .take()
                            .ok_or_else(|| malformed(i, "</EVENT> without opening tag".into()))?;
                        // Triggers exclude whitespace just inside the tags.
                        let mut s = start;
                        let mut e = raw.len();
                        while s < e && raw[s].is_whitespace() {
                            s += 1;
                        }
                        while e > s && raw[e - 1].is_whitespace() {
                            e -= 1;
                        }
                        if s == e {
                            return Err(malformed(i, format!("empty trigger for {eid}")));
                        }
                        spans.push(EventSpan {
                            eid,
                            class,
                            char_start: s,
                            char_end: e,
                            trigger_text: raw[s..e].iter().collect(),
                        });
                    } else {
                        if open.is_some() {
                            return Err(malformed(i, "nested EVENT tag".into()));
                        }
                        let eid = tag
                            .attr(&["eid"])
                            .ok_or_else(|| malformed(i, "EVENT without eid".into()))?
                            .to_string();
                        let class = tag.attr(&["class"]).unwrap_or("OCCURRENCE").to_string();
                        if tag.self_closing {
                            return Err(malformed(i, format!("empty trigger for {eid}")));
                        }
                        open = Some((eid, class, raw.len(), i));
                    }
                } else if tag.name.eq_ignore_ascii_case("TLINK") && !tag.closing {
                    let get = |keys: &[&str], what: &str| {
                        tag.attr(keys)
                            .map(str::to_string)
                            .ok_or_else(|| malformed(i, format!("TLINK without {what}")))
                    };
                    links.push(TlinkRecord {
                        source_eid: get(&["source", "eventID", "eventInstanceID"], "source")?,
                        target_eid: get(
                            &["target", "relatedToEvent", "relatedToEventInstance"],
                            "target",
                        )?,
                        relation_label: get(&["relation", "relType"], "relation")?,
                    });
                }
                i += close + 1;
            }
            '&' => match entity_at(&chars, i) {
                Some((c, n)) => {
                    raw.push(c);
                    i += n;
                }
                None => {
                    raw.push('&');
                    i += 1;
                }
            },
            c => {
                raw.push(c);
                i += 1;
            }
        }
    }
    if let Some((eid, _, _, pos)) = open {
        return Err(malformed(pos, format!("unclosed EVENT {eid}")));
    }

    let mut seen = HashSet::new();
    for s in &spans {
        if !seen.insert(s.eid.as_str()) {
            return Err(CorpusError::DuplicateEid {
                doc_id: doc_id.to_string(),
                eid: s.eid.clone(),
            });
        }
    }
    for l in &links {
        for eid in [&l.source_eid, &l.target_eid] {
            if !seen.contains(eid.as_str()) {
                return Err(CorpusError::DanglingTlink {
                    doc_id: doc_id.to_string(),
                    eid: eid.clone(),
                });
            }
        }
        if l.relation_label.parse::<TemporalRelation>().is_err() {
            return Err(CorpusError::UnknownRelation {
                doc_id: doc_id.to_string(),
                label: l.relation_label.clone(),
            });
        }
    }

    Ok(AnnotatedDocument {
        doc_id: doc_id.to_string(),
        raw_text: raw.into_iter().collect(),
        event_spans: spans,
        tlink_records: links,
    })
}

/// Renders `raw_text` with inline `EVENT` tags. Temporal links are not
/// included; see [`to_relation_table`].
pub fn to_markup(doc: &AnnotatedDocument) -> String {
    let mut spans: Vec<&EventSpan> = doc.event_spans.iter().collect();
    spans.sort_by_key(|s| s.char_start);
    let chars: Vec<char> = doc.raw_text.chars().collect();
    let mut out = String::with_capacity(doc.raw_text.len() + 48 * spans.len());
    let mut pos = 0;
    for s in spans {
        let before: String = chars[pos..s.char_start].iter().collect();
        out.push_str(&escape_text(&before));
        let trigger: String = chars[s.char_start..s.char_end].iter().collect();
        let _ = write!(
            out,
            "<EVENT class=\"{}\" eid=\"{}\">{}</EVENT>",
            escape_attr(&s.class),
            escape_attr(&s.eid),
            escape_text(&trigger)
        );
        pos = s.char_end;
    }
    let tail: String = chars[pos..].iter().collect();
    out.push_str(&escape_text(&tail));
    out
}

/// One `doc_id<TAB>source<TAB>relation<TAB>target` line per record.
pub fn to_relation_table(doc: &AnnotatedDocument) -> String {
    let mut out = String::new();
    for l in &doc.tlink_records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            doc.doc_id, l.source_eid, l.relation_label, l.target_eid
        );
    }
    out
}

/// Parses the sidecar relation table into records grouped by document.
/// Lines starting with `#` and a leading `doc_id` header are skipped.
pub fn parse_relation_table(
    text: &str,
) -> Result<BTreeMap<String, Vec<TlinkRecord>>, CorpusError> {
    let mut out: BTreeMap<String, Vec<TlinkRecord>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if n == 0 && cols.first() == Some(&"doc_id") {
            continue;
        }
        if cols.len() != 4 || cols.iter().any(|c| c.is_empty()) {
            return Err(CorpusError::BadRelationLine {
                line: n + 1,
                msg: format!("expected 4 non-empty tab-separated columns, got {line:?}"),
            });
        }
        out.entry(cols[0].to_string()).or_default().push(TlinkRecord {
            source_eid: cols[1].to_string(),
            relation_label: cols[2].to_string(),
            target_eid: cols[3].to_string(),
        });
    }
    Ok(out)
}
