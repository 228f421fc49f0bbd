//! Inverted index over classic-presentation text, one index per label.
//!
//! Snapshot format (`<store_root>/index/<label>.idx`), UTF-8, one record per
//! line:
//!
//! ```text
//! textpond-index 1
//! label <label>
//! doc <doc_id> <token_count>
//! term <term>
//! p <doc_id> <position>:<start>:<end> ...
//! ```
//!
//! `p` lines belong to the closest preceding `term` line; spans are byte
//! offsets into the document's classic text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DocumentId;
use crate::resources::Thesaurus;
use crate::textproc::{stem, tokenize, Label, Payload, TransformationKind};

const SNAPSHOT_MAGIC: &str = "textpond-index 1";

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("only classic-presentation text can be indexed")]
    WrongPayloadKind,
    #[error("label {0} is not indexed")]
    UnknownLabel(String),
    #[error("document {0} is not indexed")]
    UnknownDocument(String),
    #[error("bad index snapshot at line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_id: DocumentId,
    pub positions: Vec<usize>,
    pub spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingsIndex {
    pub label: Label,
    terms: BTreeMap<String, Vec<Posting>>,
    /// doc -> token count
    documents: BTreeMap<DocumentId, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub text: String,
    /// Byte range of the snippet in the classic text.
    pub start: usize,
    pub end: usize,
}

impl PostingsIndex {
    pub fn new(label: Label) -> Self {
        Self {
            label,
            terms: BTreeMap::new(),
            documents: BTreeMap::new(),
        }
    }

    pub fn documents(&self) -> impl Iterator<Item = &DocumentId> {
        self.documents.keys()
    }

    pub fn contains(&self, id: &DocumentId) -> bool {
        self.documents.contains_key(id)
    }

    pub fn token_count(&self, id: &DocumentId) -> Option<usize> {
        self.documents.get(id).copied()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.terms.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &String> {
        self.terms.keys()
    }

    pub fn remove(&mut self, id: &DocumentId) {
        if self.documents.remove(id).is_none() {
            return;
        }
        self.terms.retain(|_, postings| {
            postings.retain(|p| &p.doc_id != id);
            !postings.is_empty()
        });
    }

    /// Indexes (or re-indexes) one document's classic text.
    pub fn index_artifact(&mut self, id: &DocumentId, payload: &Payload) -> Result<(), IndexError> {
        let Payload::Text(text) = payload else {
            return Err(IndexError::WrongPayloadKind);
        };
        self.index_text(id, text);
        Ok(())
    }

    pub fn index_text(&mut self, id: &DocumentId, text: &str) {
        self.remove(id);
        let tokens = tokenize(text);
        let mut per_term: BTreeMap<String, Posting> = BTreeMap::new();
        for t in &tokens {
            let p = per_term.entry(t.normalized.clone()).or_insert_with(|| Posting {
                doc_id: id.clone(),
                positions: Vec::new(),
                spans: Vec::new(),
            });
            p.positions.push(t.position);
            p.spans.push(t.char_span);
        }
        for (term, posting) in per_term {
            let list = self.terms.entry(term).or_default();
            let at = list.partition_point(|p| p.doc_id < *id);
            list.insert(at, posting);
        }
        self.documents.insert(id.clone(), tokens.len());
    }

    /// Documents matching the query groups. Each group is one query term with
    /// its expansions; with `all_terms` every group must match, otherwise any
    /// group suffices. No groups selects every indexed document.
    pub fn search(&self, groups: &[BTreeSet<String>], all_terms: bool) -> BTreeSet<DocumentId> {
        if groups.is_empty() {
            return self.documents.keys().cloned().collect();
        }
        let group_hits = |g: &BTreeSet<String>| -> BTreeSet<DocumentId> {
            g.iter()
                .flat_map(|t| self.postings(t).iter().map(|p| p.doc_id.clone()))
                .collect()
        };
        let mut hits = groups.iter().map(group_hits);
        let first = hits.next().unwrap_or_default();
        if all_terms {
            hits.fold(first, |acc, h| &acc & &h)
        } else {
            hits.fold(first, |acc, h| &acc | &h)
        }
    }

    /// Windows of `window` characters on each side of every match in
    /// `text`, clipped to the text and merged where they overlap.
    pub fn highlights(
        &self,
        id: &DocumentId,
        text: &str,
        terms: &BTreeSet<String>,
        window: usize,
    ) -> Result<Vec<Snippet>, IndexError> {
        if !self.contains(id) {
            return Err(IndexError::UnknownDocument(id.to_string()));
        }
        let mut spans: Vec<(usize, usize)> = terms
            .iter()
            .flat_map(|t| self.postings(t).iter().filter(|p| &p.doc_id == id))
            .flat_map(|p| p.spans.iter().copied())
            .filter(|&(s, e)| e <= text.len() && text.is_char_boundary(s) && text.is_char_boundary(e))
            .collect();
        spans.sort_unstable();
        let mut ranges: Vec<(usize, usize)> = Vec::new();
        for (s, e) in spans {
            let start = back_chars(text, s, window);
            let end = forward_chars(text, e, window);
            match ranges.last_mut() {
                Some(last) if start <= last.1 => last.1 = last.1.max(end),
                _ => ranges.push((start, end)),
            }
        }
        Ok(ranges
            .into_iter()
            .map(|(start, end)| Snippet {
                text: text[start..end].to_string(),
                start,
                end,
            })
            .collect())
    }

    pub fn to_snapshot(&self) -> String {
        let mut out = format!("{SNAPSHOT_MAGIC}\nlabel {}\n", self.label);
        for (id, count) in &self.documents {
            let _ = writeln!(out, "doc {id} {count}");
        }
        for (term, postings) in &self.terms {
            let _ = writeln!(out, "term {term}");
            for p in postings {
                let _ = write!(out, "p {}", p.doc_id);
                for (pos, (s, e)) in p.positions.iter().zip(&p.spans) {
                    let _ = write!(out, " {pos}:{s}:{e}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_snapshot(contents: &str) -> Result<Self, IndexError> {
        let bad = |line: usize, reason: &str| IndexError::Snapshot {
            line,
            reason: reason.to_string(),
        };
        let mut lines = contents.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, SNAPSHOT_MAGIC)) => {}
            _ => return Err(bad(1, "missing header")),
        }
        let label: Label = match lines.next() {
            Some((n, l)) => l
                .strip_prefix("label ")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(n, "bad label line"))?,
            None => return Err(bad(2, "missing label")),
        };
        let mut index = Self::new(label);
        let mut current: Option<String> = None;
        for (n, line) in lines {
            let (kind, rest) = line.split_once(' ').ok_or_else(|| bad(n, "bad record"))?;
            match kind {
                "doc" => {
                    let (id, count) = rest.split_once(' ').ok_or_else(|| bad(n, "bad doc record"))?;
                    let id: DocumentId = id.parse().map_err(|_| bad(n, "bad doc id"))?;
                    let count = count.parse().map_err(|_| bad(n, "bad token count"))?;
                    index.documents.insert(id, count);
                }
                "term" => {
                    index.terms.entry(rest.to_string()).or_default();
                    current = Some(rest.to_string());
                }
                "p" => {
                    let term = current.as_ref().ok_or_else(|| bad(n, "posting before term"))?;
                    let mut fields = rest.split(' ');
                    let doc_id: DocumentId = fields
                        .next()
                        .and_then(|f| f.parse().ok())
                        .ok_or_else(|| bad(n, "bad posting doc id"))?;
                    if !index.documents.contains_key(&doc_id) {
                        return Err(bad(n, "posting for undeclared document"));
                    }
                    let mut posting = Posting {
                        doc_id,
                        positions: Vec::new(),
                        spans: Vec::new(),
                    };
                    for f in fields {
                        let parts: Vec<usize> = f
                            .split(':')
                            .map(|x| x.parse().map_err(|_| bad(n, "bad occurrence")))
                            .collect::<Result<_, _>>()?;
                        let [pos, s, e] = parts[..] else {
                            return Err(bad(n, "bad occurrence"));
                        };
                        if posting.positions.last().is_some_and(|&last| last >= pos) || e <= s {
                            return Err(bad(n, "occurrences out of order"));
                        }
                        posting.positions.push(pos);
                        posting.spans.push((s, e));
                    }
                    let list = index.terms.get_mut(term).expect("term inserted above");
                    if list.last().is_some_and(|p| p.doc_id >= posting.doc_id) {
                        return Err(bad(n, "postings out of order"));
                    }
                    list.push(posting);
                }
                _ => return Err(bad(n, "unknown record")),
            }
        }
        Ok(index)
    }
}

fn back_chars(text: &str, from: usize, n: usize) -> usize {
    if n == 0 {
        return from;
    }
    text[..from]
        .char_indices()
        .rev()
        .nth(n - 1)
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn forward_chars(text: &str, from: usize, n: usize) -> usize {
    text[from..]
        .char_indices()
        .nth(n)
        .map(|(i, _)| from + i)
        .unwrap_or(text.len())
}

/// Turns raw query terms into match groups for an index built on
/// `transformation`: lowercase, thesaurus expansion, then the same
/// term rewriting the transformation applied to documents. Stemmed labels
/// match a term's stem under any of `languages` as well as the bare form.
pub fn prepare_query(
    terms: &[String],
    transformation: TransformationKind,
    thesaurus: Option<&Thesaurus>,
    languages: &[String],
) -> Vec<BTreeSet<String>> {
    terms
        .iter()
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|term| {
            let expanded = match thesaurus {
                Some(th) => th.expand(&term),
                None => BTreeSet::from([term]),
            };
            match transformation {
                TransformationKind::LemmatizedVersion => expanded
                    .iter()
                    .flat_map(|t| {
                        std::iter::once(t.clone()).chain(languages.iter().map(move |l| stem(t, l)))
                    })
                    .collect(),
                _ => expanded,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u64) -> DocumentId {
        DocumentId::new(1, n)
    }

    fn label() -> Label {
        Label::classic(TransformationKind::OriginalVersion)
    }

    fn group(terms: &[&str]) -> BTreeSet<String> {
        terms.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn postings_positions() {
        let mut idx = PostingsIndex::new(label());
        idx.index_text(&id(1), "client roi client");
        let p = idx.postings("client");
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].positions, [0, 2]);
        assert_eq!(p[0].spans, [(0, 6), (11, 17)]);
        assert_eq!(idx.postings("roi")[0].positions, [1]);
        assert_eq!(idx.token_count(&id(1)), Some(3));
    }

    #[test]
    fn reindex_is_idempotent() {
        let mut once = PostingsIndex::new(label());
        once.index_text(&id(1), "client roi client");
        let mut twice = once.clone();
        twice.index_text(&id(1), "client roi client");
        assert_eq!(once, twice);
        assert_eq!(
            once.index_artifact(&id(2), &Payload::Bag(Default::default())),
            Err(IndexError::WrongPayloadKind)
        );
    }

    #[test]
    fn postings_sorted_by_doc() {
        let mut idx = PostingsIndex::new(label());
        for n in [5, 1, 3] {
            idx.index_text(&id(n), "shared word");
        }
        let ids: Vec<_> = idx.postings("shared").iter().map(|p| p.doc_id.counter()).collect();
        assert_eq!(ids, [1, 3, 5]);
    }

    #[test]
    fn search_semantics() {
        let mut idx = PostingsIndex::new(label());
        idx.index_text(&id(1), "le client est roi");
        idx.index_text(&id(2), "le consommateur paie");
        idx.index_text(&id(3), "rien ici");
        let th = Thesaurus::parse("client,consommateur");
        let plain = prepare_query(&["Client".into()], TransformationKind::OriginalVersion, None, &[]);
        let expanded = prepare_query(&["client".into()], TransformationKind::OriginalVersion, Some(&th), &[]);
        assert_eq!(idx.search(&plain, false), BTreeSet::from([id(1)]));
        assert_eq!(idx.search(&expanded, false), BTreeSet::from([id(1), id(2)]));
        assert_eq!(idx.search(&[], false).len(), 3);
        let absent = prepare_query(&["absent".into()], TransformationKind::OriginalVersion, None, &[]);
        assert!(idx.search(&absent, false).is_empty());

        let two = vec![group(&["le"]), group(&["roi"])];
        assert_eq!(idx.search(&two, false), BTreeSet::from([id(1), id(2)]));
        assert_eq!(idx.search(&two, true), BTreeSet::from([id(1)]));
    }

    #[test]
    fn stemmed_query_terms() {
        let g = prepare_query(&["clients".into()], TransformationKind::LemmatizedVersion, None, &["fr".into(), "en".into()]);
        assert!(g[0].contains("client"));
        assert!(g[0].contains("clients"));
    }

    #[test]
    fn highlight_windowing() {
        let mut idx = PostingsIndex::new(label());
        let text = "aaa client bbb";
        idx.index_text(&id(1), text);
        let s = idx.highlights(&id(1), text, &group(&["client"]), 4).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].text, "aaa client bbb");

        let s = idx.highlights(&id(1), text, &group(&["client"]), 2).unwrap();
        assert_eq!(s[0].text, "a client b");

        assert!(idx.highlights(&id(1), text, &group(&["absent"]), 4).unwrap().is_empty());
        assert_eq!(
            idx.highlights(&id(9), text, &group(&["client"]), 4),
            Err(IndexError::UnknownDocument(id(9).to_string()))
        );
    }

    #[test]
    fn overlapping_windows_merge() {
        let mut idx = PostingsIndex::new(label());
        let text = "xxxxxxxxxx client yy client zzzzzzzzzz client";
        idx.index_text(&id(1), text);
        // windows of 5 around the first two matches overlap (gap of 4 chars);
        // the third is 12 chars past the second and stays separate
        let s = idx.highlights(&id(1), text, &group(&["client"]), 5).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].text, "xxxx client yy client zzzz");
        assert_eq!(s[1].text, "zzzz client");
        assert!(s[0].end <= s[1].start);
    }

    #[test]
    fn window_counts_characters_not_bytes() {
        let mut idx = PostingsIndex::new(label());
        let text = "ééé client ààà";
        idx.index_text(&id(1), text);
        let s = idx.highlights(&id(1), text, &group(&["client"]), 2).unwrap();
        assert_eq!(s[0].text, "é client à");
    }

    #[test]
    fn snapshot_round_trip() {
        let mut idx = PostingsIndex::new(label());
        idx.index_text(&id(1), "le client est roi");
        idx.index_text(&id(2), "le consommateur");
        idx.index_text(&id(3), "");
        let snap = idx.to_snapshot();
        assert_eq!(PostingsIndex::from_snapshot(&snap).unwrap(), idx);
        assert!(matches!(
            PostingsIndex::from_snapshot("garbage"),
            Err(IndexError::Snapshot { line: 1, .. })
        ));
        let broken = snap.replace("p D-1-2", "p D-1-9");
        assert!(PostingsIndex::from_snapshot(&broken).is_err());
    }
}
