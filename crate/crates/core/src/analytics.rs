//! Slice-and-dice filtering, aggregate measures and proximity analyses.
//!
//! Everything here is a pure function of a [`Catalog`], a borrowed view of
//! one store snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::thesaurus_resource;
use crate::index::{prepare_query, PostingsIndex};
use crate::ingest::DocumentId;
use crate::linkgraph::{Edge, LogicalLinkGraph};
use crate::manifest::{AtomicElement, ManifestStore};
use crate::resources::Thesaurus;
use crate::textproc::{top_k, Label, Resources, TermVector, TransformationKind};
use crate::walktrap::{modularity, walktrap, WeightedGraph, DEFAULT_WALK_LENGTH};

pub const DEFAULT_HIGHLIGHT_WINDOW: usize = 80;
pub const UNKNOWN_PERIOD: &str = "unknown";

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("unknown facet {0:?}")]
    UnknownFacet(String),
    #[error("no index for label {0}")]
    UnknownLabel(String),
    #[error("no thesaurus named {0:?}")]
    UnknownThesaurus(String),
    #[error("unknown document {0}")]
    UnknownDocument(String),
    #[error("centrality needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

/// Borrowed view of one store snapshot.
#[derive(Clone, Copy)]
pub struct Catalog<'a> {
    pub manifests: &'a ManifestStore,
    /// Inverted indexes keyed by classic label.
    pub indexes: &'a BTreeMap<Label, PostingsIndex>,
    /// Term-frequency vectors of the aggregation label, per document.
    pub term_frequencies: &'a BTreeMap<DocumentId, TermVector>,
    pub resources: &'a Resources,
    /// Configured languages, used to stem queries against stemmed labels.
    pub languages: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisQuery {
    /// OR within a facet, AND across facets. An empty value set is neutral.
    pub facet_filters: BTreeMap<String, BTreeSet<String>>,
    /// Empty means no keyword restriction.
    pub keyword_terms: BTreeSet<String>,
    pub transformation: TransformationKind,
    pub use_thesaurus: Option<String>,
    pub highlight_window: usize,
    pub all_terms: bool,
}

impl Default for AnalysisQuery {
    fn default() -> Self {
        Self {
            facet_filters: BTreeMap::new(),
            keyword_terms: BTreeSet::new(),
            transformation: TransformationKind::OriginalVersion,
            use_thesaurus: None,
            highlight_window: DEFAULT_HIGHLIGHT_WINDOW,
            all_terms: false,
        }
    }
}

impl<'a> Catalog<'a> {
    /// Resolves a thesaurus resource by name; a bare language code such as
    /// `fr` names `thesaurus-fr`.
    pub fn thesaurus(&self, name: Option<&str>) -> Result<Option<&'a Thesaurus>, AnalyticsError> {
        match name {
            None => Ok(None),
            Some(n) => self
                .resources
                .thesaurus(n)
                .or_else(|| self.resources.thesaurus(&thesaurus_resource(n)))
                .map(Some)
                .ok_or_else(|| AnalyticsError::UnknownThesaurus(n.to_string())),
        }
    }

    pub fn index(&self, label: &Label) -> Result<&'a PostingsIndex, AnalyticsError> {
        self.indexes
            .get(label)
            .ok_or_else(|| AnalyticsError::UnknownLabel(label.to_string()))
    }

    /// Documents whose `label` text contains any (or, with `all_terms`,
    /// every) query term, after optional thesaurus expansion.
    pub fn keyword_search(
        &self,
        terms: &[String],
        label: &Label,
        thesaurus: Option<&str>,
        all_terms: bool,
    ) -> Result<BTreeSet<DocumentId>, AnalyticsError> {
        let index = self.index(label)?;
        let thesaurus = self.thesaurus(thesaurus)?;
        let groups = prepare_query(terms, label.transformation, thesaurus, self.languages);
        Ok(index.search(&groups, all_terms))
    }

    pub fn all_ids(&self) -> BTreeSet<DocumentId> {
        self.manifests.ids().cloned().collect()
    }
}

pub fn filter(cat: &Catalog<'_>, q: &AnalysisQuery) -> Result<BTreeSet<DocumentId>, AnalyticsError> {
    let known: BTreeSet<&String> = cat.manifests.link_names().collect();
    let mut result = cat.all_ids();
    for (name, values) in &q.facet_filters {
        if !known.contains(name) {
            return Err(AnalyticsError::UnknownFacet(name.clone()));
        }
        if values.is_empty() {
            continue;
        }
        let accepted: BTreeSet<DocumentId> = values
            .iter()
            .flat_map(|v| cat.manifests.query_by_physical_link(name, v))
            .collect();
        result = &result & &accepted;
    }
    if !q.keyword_terms.is_empty() {
        let terms: Vec<String> = q.keyword_terms.iter().cloned().collect();
        let hits = cat.keyword_search(
            &terms,
            &Label::classic(q.transformation),
            q.use_thesaurus.as_deref(),
            q.all_terms,
        )?;
        result = &result & &hits;
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeGranularity {
    #[default]
    Year,
    Month,
}

impl FromStr for TimeGranularity {
    type Err = AnalyticsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "year" => Ok(Self::Year),
            "month" => Ok(Self::Month),
            _ => Err(AnalyticsError::InvalidQuery(format!("granularity {s:?}"))),
        }
    }
}

impl fmt::Display for TimeGranularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Year => "year",
            Self::Month => "month",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCount {
    pub term: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermWeight {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub matched_ids: BTreeSet<DocumentId>,
    pub facet: String,
    pub granularity: TimeGranularity,
    /// Facet value -> count; documents without the facet are not counted.
    pub distribution: BTreeMap<String, usize>,
    /// Creation period -> count; undated documents land in `unknown`.
    pub timeline: BTreeMap<String, usize>,
    pub top_terms: Vec<TermCount>,
    pub tagcloud: Vec<TermWeight>,
}

fn period(date: Option<&String>, granularity: TimeGranularity) -> String {
    let Some(dt) = date.and_then(|d| DateTime::parse_from_rfc3339(d).ok()) else {
        return UNKNOWN_PERIOD.to_string();
    };
    match granularity {
        TimeGranularity::Year => format!("{:04}", dt.year()),
        TimeGranularity::Month => format!("{:04}-{:02}", dt.year(), dt.month()),
    }
}

pub fn aggregate(
    cat: &Catalog<'_>,
    ids: &BTreeSet<DocumentId>,
    facet: &str,
    granularity: TimeGranularity,
    k_terms: usize,
) -> Result<AggregateReport, AnalyticsError> {
    if !cat.manifests.link_names().any(|n| n == facet) {
        return Err(AnalyticsError::UnknownFacet(facet.to_string()));
    }
    if k_terms == 0 {
        return Err(AnalyticsError::InvalidQuery("k_terms must be positive".into()));
    }
    let mut distribution = BTreeMap::new();
    let mut timeline = BTreeMap::new();
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for id in ids {
        let m = cat
            .manifests
            .get(id)
            .ok_or_else(|| AnalyticsError::UnknownDocument(id.to_string()))?;
        if let Some(v) = m.physical_link(facet) {
            *distribution.entry(v.to_string()).or_insert(0) += 1;
        }
        *timeline
            .entry(period(m.atomic_section.get(&AtomicElement::Date), granularity))
            .or_insert(0) += 1;
        if let Some(tf) = cat.term_frequencies.get(id) {
            for (t, w) in tf.entries() {
                *sums.entry(t).or_insert(0.0) += w;
            }
        }
    }
    let top_terms = top_k(sums.iter().map(|(t, w)| (t.to_string(), *w)), k_terms)
        .into_iter()
        .map(|(term, w)| TermCount {
            term,
            count: w.round() as u64,
        })
        .collect();
    let n = ids.len() as f64;
    let tagcloud = top_k(sums.iter().map(|(t, w)| (t.to_string(), w / n)), k_terms)
        .into_iter()
        .map(|(term, weight)| TermWeight { term, weight })
        .collect();
    Ok(AggregateReport {
        matched_ids: ids.clone(),
        facet: facet.to_string(),
        granularity,
        distribution,
        timeline,
        top_terms,
        tagcloud,
    })
}

/// Node-induced subgraph of a logical link graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub link_name: String,
    pub threshold: Option<f64>,
    pub nodes: Vec<DocumentId>,
    /// Kept edges with their stored strengths.
    pub edges: Vec<Edge>,
}

impl Subgraph {
    /// Walk graph over node positions; negative strengths count as 0.
    pub fn weighted(&self) -> WeightedGraph {
        let pos: BTreeMap<&DocumentId, usize> = self.nodes.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let mut g = WeightedGraph::new(self.nodes.len());
        for e in &self.edges {
            g.add_edge(pos[&e.a], pos[&e.b], e.strength.max(0.0));
        }
        g
    }
}

/// Keeps nodes in `ids` (those absent from the graph are ignored) and the
/// edges between them with strength `>= threshold`; `None` keeps all.
pub fn threshold_subgraph(g: &LogicalLinkGraph, ids: &BTreeSet<DocumentId>, threshold: Option<f64>) -> Subgraph {
    let nodes: Vec<DocumentId> = g.nodes.intersection(ids).cloned().collect();
    let edges = g
        .edges
        .iter()
        .filter(|((a, b), s)| ids.contains(a) && ids.contains(b) && threshold.is_none_or(|t| **s >= t))
        .map(|((a, b), s)| Edge {
            a: a.clone(),
            b: b.clone(),
            strength: *s,
        })
        .collect();
    Subgraph {
        link_name: g.link_name.clone(),
        threshold,
        nodes,
        edges,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityResult {
    pub link_name: String,
    pub threshold: Option<f64>,
    /// Blocks in order of their smallest member; members sorted.
    pub communities: Vec<Vec<DocumentId>>,
    pub modularity: f64,
}

pub fn communities(sub: &Subgraph, walk_length: usize) -> CommunityResult {
    let g = sub.weighted();
    let r = walktrap(&g, walk_length.max(1));
    CommunityResult {
        link_name: sub.link_name.clone(),
        threshold: sub.threshold,
        communities: r
            .communities()
            .into_iter()
            .map(|block| block.into_iter().map(|i| sub.nodes[i].clone()).collect())
            .collect(),
        modularity: r.modularity,
    }
}

pub fn default_communities(sub: &Subgraph) -> CommunityResult {
    communities(sub, DEFAULT_WALK_LENGTH)
}

/// Modularity of `blocks` on `sub`, computed from scratch.
pub fn partition_modularity(sub: &Subgraph, blocks: &[Vec<DocumentId>]) -> f64 {
    let of: BTreeMap<&DocumentId, usize> = blocks
        .iter()
        .enumerate()
        .flat_map(|(c, b)| b.iter().map(move |id| (id, c)))
        .collect();
    let membership: Vec<usize> = sub.nodes.iter().map(|id| of[id]).collect();
    modularity(&sub.weighted(), &membership)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityResult {
    pub link_name: String,
    pub scores: BTreeMap<DocumentId, f64>,
    /// Ids by descending score, ties by id.
    pub ranking: Vec<DocumentId>,
}

/// Normalized weighted degree: incident strength over `n - 1`, with
/// negative strengths counted as 0.
pub fn centrality(sub: &Subgraph) -> Result<CentralityResult, AnalyticsError> {
    let n = sub.nodes.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewNodes(n));
    }
    let mut scores: BTreeMap<DocumentId, f64> = sub.nodes.iter().map(|id| (id.clone(), 0.0)).collect();
    for e in &sub.edges {
        let w = e.strength.max(0.0);
        *scores.get_mut(&e.a).expect("edge endpoint is a node") += w;
        *scores.get_mut(&e.b).expect("edge endpoint is a node") += w;
    }
    for s in scores.values_mut() {
        *s /= (n - 1) as f64;
    }
    let mut ranking: Vec<DocumentId> = scores.keys().cloned().collect();
    ranking.sort_by(|a, b| scores[b].total_cmp(&scores[a]).then_with(|| a.cmp(b)));
    Ok(CentralityResult {
        link_name: sub.link_name.clone(),
        scores,
        ranking,
    })
}
