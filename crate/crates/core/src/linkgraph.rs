//! Logical links: complete weighted graphs of pairwise document similarity.
//!
//! A graph is named `<presentation label>+<measure>`, for example
//! `original_version+tfidf_vector+cosine`, and has one edge per unordered
//! pair of measurable documents.
//!
//! Measures:
//!
//! * cosine: `sum(u_t * v_t) / (|u| |v|)`, in [0, 1] for non-negative weights.
//! * chi-square similarity: both vectors are normalized to distributions
//!   `p`, `q`; `chi2 = sum_t (p_t - q_t)^2 / (p_t + q_t)` over terms with
//!   `p_t + q_t > 0`; the strength is `1 / (1 + chi2)`, in (0, 1].
//! * Spearman: over the union vocabulary (absent terms weigh 0), terms are
//!   ranked within each document with average ranks for ties, and the
//!   Pearson correlation of the two rank sequences is returned.
//!
//! Storage: `<store_root>/links/<link_name>.csv` holds `# link <name>` and
//! `# node <id>` header lines followed by `id_a,id_b,strength` rows with
//! `id_a < id_b`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::atomic_write;
use crate::ingest::DocumentId;
use crate::textproc::{Label, PresentationKind, TermVector};

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("zero vector")]
    ZeroVector,
    #[error("rank sequence is constant")]
    DegenerateRanks,
    #[error("{measure} cannot consume {label} vectors")]
    IncompatiblePresentation { measure: MeasureKind, label: String },
    #[error("unknown similarity measure {0:?}")]
    UnknownMeasure(String),
    #[error("malformed link name {0:?}")]
    BadLinkName(String),
    #[error("no stored graph named {0}")]
    NotFound(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("malformed graph file at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Cosine,
    ChiSquare,
    Spearman,
}

impl MeasureKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cosine => "cosine",
            Self::ChiSquare => "chi_square",
            Self::Spearman => "spearman",
        }
    }

    pub fn apply(self, u: &TermVector, v: &TermVector) -> Result<f64, LinkError> {
        match self {
            Self::Cosine => cosine(u, v),
            Self::ChiSquare => chi_square_similarity(u, v),
            Self::Spearman => spearman(u, v),
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = LinkError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "chi_square" | "chi-square" | "chi2" => Ok(Self::ChiSquare),
            "spearman" => Ok(Self::Spearman),
            _ => Err(LinkError::UnknownMeasure(s.to_string())),
        }
    }
}

/// A measure bound to the presentation whose vectors it consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SimilarityMeasure {
    pub kind: MeasureKind,
    pub presentation_label: Label,
}

impl SimilarityMeasure {
    pub fn new(kind: MeasureKind, presentation_label: Label) -> Result<Self, LinkError> {
        let ok = match kind {
            MeasureKind::Cosine | MeasureKind::ChiSquare => matches!(
                presentation_label.presentation,
                PresentationKind::TermFrequencyVector | PresentationKind::TfidfVector
            ),
            MeasureKind::Spearman => {
                presentation_label.presentation == PresentationKind::TermFrequencyVector
            }
        };
        if !ok {
            return Err(LinkError::IncompatiblePresentation {
                measure: kind,
                label: presentation_label.to_string(),
            });
        }
        Ok(Self {
            kind,
            presentation_label,
        })
    }

    pub fn link_name(&self) -> String {
        format!("{}+{}", self.presentation_label, self.kind)
    }
}

impl FromStr for SimilarityMeasure {
    type Err = LinkError;
    /// Parses a link name such as `original+tfidf+cosine`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (label, measure) = s
            .rsplit_once('+')
            .ok_or_else(|| LinkError::BadLinkName(s.to_string()))?;
        let label: Label = label.parse().map_err(|_| LinkError::BadLinkName(s.to_string()))?;
        Self::new(measure.parse()?, label)
    }
}

pub fn cosine(u: &TermVector, v: &TermVector) -> Result<f64, LinkError> {
    if u.norm() == 0.0 || v.norm() == 0.0 {
        return Err(LinkError::ZeroVector);
    }
    let (small, large) = if u.len() <= v.len() { (u, v) } else { (v, u) };
    let dot: f64 = small.entries().iter().map(|(t, w)| w * large.get(t)).sum();
    Ok((dot / (u.norm() * v.norm())).clamp(0.0, 1.0))
}

pub fn chi_square_similarity(u: &TermVector, v: &TermVector) -> Result<f64, LinkError> {
    let (mu, mv) = (u.mass(), v.mass());
    if mu <= 0.0 || mv <= 0.0 {
        return Err(LinkError::ZeroVector);
    }
    let vocab: BTreeSet<&String> = u.entries().keys().chain(v.entries().keys()).collect();
    let chi2: f64 = vocab
        .into_iter()
        .map(|t| {
            let p = u.get(t) / mu;
            let q = v.get(t) / mv;
            let s = p + q;
            if s > 0.0 {
                (p - q) * (p - q) / s
            } else {
                0.0
            }
        })
        .sum();
    Ok(1.0 / (1.0 + chi2))
}

/// 1-based average ranks of `values` in ascending order.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, LinkError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(LinkError::DegenerateRanks);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn spearman(u: &TermVector, v: &TermVector) -> Result<f64, LinkError> {
    let vocab: BTreeSet<&String> = u.entries().keys().chain(v.entries().keys()).collect();
    if vocab.len() < 2 {
        return Err(LinkError::DegenerateRanks);
    }
    let x: Vec<f64> = vocab.iter().map(|t| u.get(t)).collect();
    let y: Vec<f64> = vocab.iter().map(|t| v.get(t)).collect();
    pearson(&average_ranks(&x), &average_ranks(&y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: DocumentId,
    pub b: DocumentId,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraphRepr", from = "GraphRepr")]
pub struct LogicalLinkGraph {
    pub link_name: String,
    pub nodes: BTreeSet<DocumentId>,
    /// Keyed by `(a, b)` with `a < b`.
    pub edges: BTreeMap<(DocumentId, DocumentId), f64>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    link_name: String,
    nodes: Vec<DocumentId>,
    edges: Vec<Edge>,
}

impl From<LogicalLinkGraph> for GraphRepr {
    fn from(g: LogicalLinkGraph) -> Self {
        Self {
            link_name: g.link_name,
            nodes: g.nodes.into_iter().collect(),
            edges: g
                .edges
                .into_iter()
                .map(|((a, b), strength)| Edge { a, b, strength })
                .collect(),
        }
    }
}

impl From<GraphRepr> for LogicalLinkGraph {
    fn from(r: GraphRepr) -> Self {
        Self {
            link_name: r.link_name,
            nodes: r.nodes.into_iter().collect(),
            edges: r.edges.into_iter().map(|e| ((e.a, e.b), e.strength)).collect(),
        }
    }
}

impl LogicalLinkGraph {
    pub fn strength(&self, a: &DocumentId, b: &DocumentId) -> Option<f64> {
        let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        self.edges.get(&key).copied()
    }

    pub fn is_complete(&self) -> bool {
        let n = self.nodes.len();
        self.edges.len() == n * n.saturating_sub(1) / 2
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# link {}\n", self.link_name);
        for n in &self.nodes {
            let _ = writeln!(out, "# node {n}");
        }
        for ((a, b), s) in &self.edges {
            let _ = writeln!(out, "{a},{b},{s:?}");
        }
        out
    }

    pub fn from_csv(contents: &str) -> Result<Self, LinkError> {
        let bad = |line: usize, reason: &str| LinkError::Corrupt {
            line,
            reason: reason.into(),
        };
        let mut g = Self {
            link_name: String::new(),
            nodes: BTreeSet::new(),
            edges: BTreeMap::new(),
        };
        for (i, line) in contents.lines().enumerate() {
            let n = i + 1;
            if let Some(name) = line.strip_prefix("# link ") {
                g.link_name = name.to_string();
            } else if let Some(id) = line.strip_prefix("# node ") {
                g.nodes.insert(id.parse().map_err(|_| bad(n, "bad node id"))?);
            } else if !line.is_empty() {
                let mut f = line.split(',');
                let (Some(a), Some(b), Some(s), None) = (f.next(), f.next(), f.next(), f.next()) else {
                    return Err(bad(n, "expected id_a,id_b,strength"));
                };
                let a: DocumentId = a.parse().map_err(|_| bad(n, "bad id_a"))?;
                let b: DocumentId = b.parse().map_err(|_| bad(n, "bad id_b"))?;
                let s: f64 = s.parse().map_err(|_| bad(n, "bad strength"))?;
                if a >= b || !s.is_finite() {
                    return Err(bad(n, "edge ids unsorted or strength not finite"));
                }
                if !g.nodes.contains(&a) || !g.nodes.contains(&b) {
                    return Err(bad(n, "edge references an undeclared node"));
                }
                g.edges.insert((a, b), s);
            }
        }
        if g.link_name.is_empty() {
            return Err(bad(1, "missing link name"));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphBuildReport {
    pub link_name: String,
    pub nodes: usize,
    pub edges: usize,
    /// Documents left out because their vector is unusable for the measure.
    pub excluded: Vec<(DocumentId, String)>,
    /// Pairs whose measure was undefined; stored with strength 0.
    pub undefined_pairs: Vec<(DocumentId, DocumentId, String)>,
}

fn admissible(kind: MeasureKind, v: &TermVector) -> Result<(), LinkError> {
    match kind {
        MeasureKind::Cosine if v.norm() == 0.0 => Err(LinkError::ZeroVector),
        MeasureKind::ChiSquare | MeasureKind::Spearman if v.mass() <= 0.0 => Err(LinkError::ZeroVector),
        _ => Ok(()),
    }
}

/// One edge per unordered pair of admissible documents. Pairs are computed
/// in parallel; the result does not depend on scheduling.
pub fn build_graph(
    corpus: &BTreeMap<DocumentId, TermVector>,
    measure: SimilarityMeasure,
) -> (LogicalLinkGraph, GraphBuildReport) {
    let mut report = GraphBuildReport {
        link_name: measure.link_name(),
        ..Default::default()
    };
    let mut nodes: Vec<(&DocumentId, &TermVector)> = Vec::new();
    for (id, v) in corpus {
        match admissible(measure.kind, v) {
            Ok(()) => nodes.push((id, v)),
            Err(e) => report.excluded.push((id.clone(), e.to_string())),
        }
    }
    let pairs: Vec<(usize, usize)> = (0..nodes.len())
        .flat_map(|i| (i + 1..nodes.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<((DocumentId, DocumentId), Result<f64, LinkError>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let key = (nodes[i].0.clone(), nodes[j].0.clone());
            (key, measure.kind.apply(nodes[i].1, nodes[j].1))
        })
        .collect();
    let mut edges = BTreeMap::new();
    for ((a, b), r) in results {
        let s = match r {
            Ok(s) => s,
            Err(e) => {
                report.undefined_pairs.push((a.clone(), b.clone(), e.to_string()));
                0.0
            }
        };
        edges.insert((a, b), s);
    }
    let graph = LogicalLinkGraph {
        link_name: measure.link_name(),
        nodes: nodes.iter().map(|(id, _)| (*id).clone()).collect(),
        edges,
    };
    report.nodes = graph.nodes.len();
    report.edges = graph.edges.len();
    (graph, report)
}

pub fn links_dir(root: &Path) -> PathBuf {
    root.join("links")
}

fn graph_path(root: &Path, link_name: &str) -> PathBuf {
    links_dir(root).join(format!("{link_name}.csv"))
}

pub fn store_graph(root: &Path, g: &LogicalLinkGraph, report: Option<&GraphBuildReport>) -> Result<PathBuf, LinkError> {
    let path = graph_path(root, &g.link_name);
    atomic_write(&path, g.to_csv().as_bytes()).map_err(|e| LinkError::StorageFailure(e.to_string()))?;
    if let Some(report) = report {
        let json = serde_json::to_vec_pretty(report).map_err(|e| LinkError::StorageFailure(e.to_string()))?;
        atomic_write(&links_dir(root).join(format!("{}.report.json", g.link_name)), &json)
            .map_err(|e| LinkError::StorageFailure(e.to_string()))?;
    }
    Ok(path)
}

pub fn load_graph(root: &Path, link_name: &str) -> Result<LogicalLinkGraph, LinkError> {
    let path = graph_path(root, link_name);
    let contents = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => LinkError::NotFound(link_name.to_string()),
        _ => LinkError::StorageFailure(e.to_string()),
    })?;
    LogicalLinkGraph::from_csv(&contents)
}

/// Names of all stored graphs, sorted.
pub fn stored_graphs(root: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(links_dir(root))
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(".csv"))
                .map(str::to_string)
        })
        .collect();
    names.sort();
    names
}
