//! Transformation x presentation operations over tokenized text.
//!
//! A transformation (original, stopword removal, stemming, dictionary filter)
//! rewrites a token stream; a presentation (classic text, bag of words, term
//! frequencies, TF-IDF) renders it into a storable payload. Originals are
//! never modified: the `original_version+classic_presentation` pair yields
//! the source text verbatim.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resources::Thesaurus;

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("global resource {0:?} is not registered")]
    MissingResource(String),
    #[error("global resource {name:?} is a {actual}, expected a word list")]
    WrongResourceKind { name: String, actual: &'static str },
    #[error("invalid transformation: {0}")]
    InvalidOp(String),
    #[error("TF-IDF needs corpus statistics covering at least one document")]
    EmptyCorpusStats,
    #[error("operation needs a term vector or bag payload")]
    WrongPayloadKind,
    #[error("unknown operation name {0:?}")]
    UnknownName(String),
    #[error("malformed CSV payload at line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    pub position: usize,
    /// Byte offsets into the source text, end exclusive.
    pub char_span: (usize, usize),
}

/// Maximal runs of Unicode letters/digits; everything else separates.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let push = |s: usize, e: usize, tokens: &mut Vec<Token>| {
        let surface = &text[s..e];
        tokens.push(Token {
            surface: surface.to_string(),
            normalized: surface.to_lowercase(),
            position: tokens.len(),
            char_span: (s, e),
        });
    };
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                push(s, i, &mut tokens);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        push(s, text.len(), &mut tokens);
    }
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformationKind {
    OriginalVersion,
    StopwordRemoval,
    LemmatizedVersion,
    DictionaryFilter,
}

impl TransformationKind {
    pub const ALL: [TransformationKind; 4] = [
        Self::OriginalVersion,
        Self::StopwordRemoval,
        Self::LemmatizedVersion,
        Self::DictionaryFilter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::OriginalVersion => "original_version",
            Self::StopwordRemoval => "stopword_removal",
            Self::LemmatizedVersion => "lemmatized_version",
            Self::DictionaryFilter => "dictionary_filter",
        }
    }

    pub fn needs_resource(self) -> bool {
        matches!(self, Self::StopwordRemoval | Self::DictionaryFilter)
    }
}

impl fmt::Display for TransformationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformationKind {
    type Err = TextError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "original_version" | "original" => Self::OriginalVersion,
            "stopword_removal" | "stopwords" => Self::StopwordRemoval,
            "lemmatized_version" | "lemmatized" | "lemma" => Self::LemmatizedVersion,
            "dictionary_filter" | "dictionary" => Self::DictionaryFilter,
            _ => return Err(TextError::UnknownName(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresentationKind {
    ClassicPresentation,
    BagOfWords,
    TermFrequencyVector,
    TfidfVector,
}

impl PresentationKind {
    pub const ALL: [PresentationKind; 4] = [
        Self::ClassicPresentation,
        Self::BagOfWords,
        Self::TermFrequencyVector,
        Self::TfidfVector,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ClassicPresentation => "classic_presentation",
            Self::BagOfWords => "bag_of_words",
            Self::TermFrequencyVector => "term_frequency_vector",
            Self::TfidfVector => "tfidf_vector",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::ClassicPresentation => "txt",
            _ => "csv",
        }
    }
}

impl fmt::Display for PresentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresentationKind {
    type Err = TextError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "classic_presentation" | "classic" => Self::ClassicPresentation,
            "bag_of_words" | "bag" => Self::BagOfWords,
            "term_frequency_vector" | "tf" => Self::TermFrequencyVector,
            "tfidf_vector" | "tfidf" | "tf-idf" => Self::TfidfVector,
            _ => return Err(TextError::UnknownName(s.to_string())),
        })
    }
}

/// `<transformation>+<presentation>`, e.g. `original_version+tfidf_vector`.
/// Parsing also accepts the short forms (`original+tfidf`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub transformation: TransformationKind,
    pub presentation: PresentationKind,
}

impl Label {
    pub fn new(transformation: TransformationKind, presentation: PresentationKind) -> Self {
        Self {
            transformation,
            presentation,
        }
    }

    pub fn classic(transformation: TransformationKind) -> Self {
        Self::new(transformation, PresentationKind::ClassicPresentation)
    }

    pub fn all() -> impl Iterator<Item = Label> {
        TransformationKind::ALL.into_iter().flat_map(|t| {
            PresentationKind::ALL
                .into_iter()
                .map(move |p| Label::new(t, p))
        })
    }

    pub fn file_name(&self) -> String {
        format!("{self}.{}", self.presentation.extension())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.transformation, self.presentation)
    }
}

impl FromStr for Label {
    type Err = TextError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (t, p) = s
            .split_once('+')
            .ok_or_else(|| TextError::UnknownName(s.to_string()))?;
        Ok(Self::new(t.parse()?, p.parse()?))
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformationOp {
    pub kind: TransformationKind,
    pub resource_ref: Option<String>,
}

impl TransformationOp {
    pub fn new(kind: TransformationKind, resource_ref: Option<String>) -> Result<Self, TextError> {
        match (kind.needs_resource(), &resource_ref) {
            (true, None) => Err(TextError::InvalidOp(format!("{kind} requires a resource"))),
            (false, Some(r)) => Err(TextError::InvalidOp(format!(
                "{kind} takes no resource, got {r:?}"
            ))),
            _ => Ok(Self { kind, resource_ref }),
        }
    }

    pub fn original() -> Self {
        Self {
            kind: TransformationKind::OriginalVersion,
            resource_ref: None,
        }
    }

    pub fn lemmatized() -> Self {
        Self {
            kind: TransformationKind::LemmatizedVersion,
            resource_ref: None,
        }
    }
}

/// A resolved global resource.
#[derive(Debug, Clone)]
pub enum Resource {
    Words(HashSet<String>),
    Thesaurus(Thesaurus),
}

/// Resolved global resources by name.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub by_name: HashMap<String, Resource>,
}

impl Resources {
    pub fn words(&self, name: &str) -> Result<&HashSet<String>, TextError> {
        match self.by_name.get(name) {
            Some(Resource::Words(w)) => Ok(w),
            Some(Resource::Thesaurus(_)) => Err(TextError::WrongResourceKind {
                name: name.to_string(),
                actual: "thesaurus",
            }),
            None => Err(TextError::MissingResource(name.to_string())),
        }
    }

    pub fn thesaurus(&self, name: &str) -> Option<&Thesaurus> {
        match self.by_name.get(name) {
            Some(Resource::Thesaurus(t)) => Some(t),
            _ => None,
        }
    }
}

/// Suffix-stripping stemmer for a language code; `None` for languages
/// without rules (tokens pass through unchanged).
pub fn stemmer_for(language: &str) -> Option<Stemmer> {
    match language {
        "en" => Some(Stemmer::create(Algorithm::English)),
        "fr" => Some(Stemmer::create(Algorithm::French)),
        "de" => Some(Stemmer::create(Algorithm::German)),
        "es" => Some(Stemmer::create(Algorithm::Spanish)),
        "it" => Some(Stemmer::create(Algorithm::Italian)),
        _ => None,
    }
}

pub fn stem(word: &str, language: &str) -> String {
    match stemmer_for(language) {
        Some(s) => s.stem(word).into_owned(),
        None => word.to_string(),
    }
}

/// Applies one transformation. `language` selects the stemming rules.
/// Positions and spans of surviving tokens are kept.
pub fn transform(
    tokens: &[Token],
    op: &TransformationOp,
    resources: &Resources,
    language: &str,
) -> Result<Vec<Token>, TextError> {
    let resource = || {
        let name = op
            .resource_ref
            .as_deref()
            .ok_or_else(|| TextError::InvalidOp(format!("{} requires a resource", op.kind)))?;
        resources.words(name)
    };
    Ok(match op.kind {
        TransformationKind::OriginalVersion => tokens.to_vec(),
        TransformationKind::StopwordRemoval => {
            let stop = resource()?;
            tokens
                .iter()
                .filter(|t| !stop.contains(&t.normalized))
                .cloned()
                .collect()
        }
        TransformationKind::DictionaryFilter => {
            let dict = resource()?;
            tokens
                .iter()
                .filter(|t| dict.contains(&t.normalized))
                .cloned()
                .collect()
        }
        TransformationKind::LemmatizedVersion => {
            let stemmer = stemmer_for(language);
            tokens
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    if let Some(s) = &stemmer {
                        let stemmed = s.stem(&t.normalized).into_owned();
                        // a stem is never empty; keep the token if it would be
                        if !stemmed.is_empty() {
                            t.normalized = stemmed;
                        }
                    }
                    t
                })
                .collect()
        }
    })
}

/// Sparse non-negative term weights with a cached Euclidean norm.
/// Zero weights are never stored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TermVector {
    entries: BTreeMap<String, f64>,
    norm: f64,
}

impl TermVector {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        let entries: BTreeMap<String, f64> = entries.into_iter().filter(|(_, w)| *w != 0.0).collect();
        let norm = entries.values().map(|w| w * w).sum::<f64>().sqrt();
        Self { entries, norm }
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    pub fn get(&self, term: &str) -> f64 {
        self.entries.get(term).copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn mass(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_entries(self.entries.iter().map(|(t, w)| (t.clone(), w * factor)))
    }
}

/// Document frequencies over a corpus snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub df: HashMap<String, usize>,
}

pub fn build_document_frequency<'a>(corpus: impl IntoIterator<Item = &'a TermVector>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for v in corpus {
        stats.documents += 1;
        for (term, w) in &v.entries {
            if *w > 0.0 {
                *stats.df.entry(term.clone()).or_default() += 1;
            }
        }
    }
    stats
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Text(String),
    Bag(BTreeMap<String, u64>),
    Frequencies(TermVector),
    Tfidf(TermVector),
}

impl Payload {
    /// Term weights for vector-like payloads.
    pub fn weights(&self) -> Option<TermVector> {
        match self {
            Payload::Text(_) => None,
            Payload::Bag(b) => Some(TermVector::from_entries(
                b.iter().map(|(t, c)| (t.clone(), *c as f64)),
            )),
            Payload::Frequencies(v) | Payload::Tfidf(v) => Some(v.clone()),
        }
    }
}

pub fn term_counts(tokens: &[Token]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.normalized.clone()).or_insert(0u64) += 1;
    }
    counts
}

pub fn term_frequencies(tokens: &[Token]) -> TermVector {
    TermVector::from_entries(term_counts(tokens).into_iter().map(|(t, c)| (t, c as f64)))
}

/// Raw tf times ln(N / df). Terms present in every document get weight 0
/// and are pruned. A term missing from the statistics counts as df = 1.
pub fn tfidf(tf: &TermVector, stats: &CorpusStats) -> Result<TermVector, TextError> {
    if stats.documents == 0 {
        return Err(TextError::EmptyCorpusStats);
    }
    let n = stats.documents as f64;
    Ok(TermVector::from_entries(tf.entries.iter().map(|(term, count)| {
        let df = stats.df.get(term).copied().unwrap_or(0).max(1) as f64;
        (term.clone(), count * (n / df).ln())
    })))
}

/// Renders transformed tokens. `stats` is only consulted for TF-IDF.
pub fn present(
    tokens: &[Token],
    kind: PresentationKind,
    stats: Option<&CorpusStats>,
) -> Result<Payload, TextError> {
    Ok(match kind {
        PresentationKind::ClassicPresentation => Payload::Text(
            tokens
                .iter()
                .map(|t| t.normalized.as_str())
                .collect::<Vec<_>>()
                .join(" "),
        ),
        PresentationKind::BagOfWords => Payload::Bag(term_counts(tokens)),
        PresentationKind::TermFrequencyVector => Payload::Frequencies(term_frequencies(tokens)),
        PresentationKind::TfidfVector => {
            let stats = stats.ok_or(TextError::EmptyCorpusStats)?;
            Payload::Tfidf(tfidf(&term_frequencies(tokens), stats)?)
        }
    })
}

/// Full operation pair on a source text. The neutral pair returns the source
/// unchanged.
pub fn render(
    text: &str,
    op: &TransformationOp,
    presentation: PresentationKind,
    resources: &Resources,
    language: &str,
    stats: Option<&CorpusStats>,
) -> Result<Payload, TextError> {
    if op.kind == TransformationKind::OriginalVersion
        && presentation == PresentationKind::ClassicPresentation
    {
        return Ok(Payload::Text(text.to_string()));
    }
    let tokens = transform(&tokenize(text), op, resources, language)?;
    present(&tokens, presentation, stats)
}

/// Top-k terms by weight, descending, ties broken lexicographically.
pub fn previsualize(payload: &Payload, k: usize) -> Result<Vec<(String, f64)>, TextError> {
    let weights = payload.weights().ok_or(TextError::WrongPayloadKind)?;
    Ok(top_k(weights.entries.iter().map(|(t, w)| (t.clone(), *w)), k))
}

pub fn top_k(items: impl IntoIterator<Item = (String, f64)>, k: usize) -> Vec<(String, f64)> {
    let mut items: Vec<(String, f64)> = items.into_iter().collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items.truncate(k);
    items
}

/// `term,weight` lines sorted by term. Integral payloads (bag, TF) are
/// written without a fractional part; TF-IDF uses shortest round-trip
/// float formatting.
pub fn payload_to_csv(payload: &Payload) -> Result<String, TextError> {
    let mut out = String::from("term,weight\n");
    match payload {
        Payload::Text(_) => return Err(TextError::WrongPayloadKind),
        Payload::Bag(b) => {
            for (t, c) in b {
                out.push_str(&format!("{t},{c}\n"));
            }
        }
        Payload::Frequencies(v) => {
            for (t, w) in &v.entries {
                out.push_str(&format!("{t},{}\n", *w as u64));
            }
        }
        Payload::Tfidf(v) => {
            for (t, w) in &v.entries {
                out.push_str(&format!("{t},{w:?}\n"));
            }
        }
    }
    Ok(out)
}

pub fn vector_from_csv(contents: &str) -> Result<TermVector, TextError> {
    let mut entries = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        if i == 0 && line == "term,weight" {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (term, weight) = line.rsplit_once(',').ok_or_else(|| TextError::Csv {
            line: i + 1,
            reason: "expected two columns".into(),
        })?;
        let weight: f64 = weight.parse().map_err(|_| TextError::Csv {
            line: i + 1,
            reason: format!("bad weight {weight:?}"),
        })?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(TextError::Csv {
                line: i + 1,
                reason: format!("weight {weight} out of range"),
            });
        }
        entries.push((term.to_string(), weight));
    }
    Ok(TermVector::from_entries(entries))
}
