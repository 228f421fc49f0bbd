//! The store as a whole: ingestion pipeline, snapshots and analyses.
//!
//! Store layout under the root:
//!
//! ```text
//! global/global.xml                      global manifest
//! global/<resource>.txt                  registered resources
//! raw/<doc_id>/<file>[.txt]              ingested bytes and sidecar
//! presentation/<doc_id>/<label>.<ext>    artifacts and tagcloud.csv
//! manifests/<doc_id>.xml                 document manifests
//! index/<label>.idx                      inverted index snapshots
//! links/<link_name>.csv                  logical link graphs
//! ```
//!
//! Readers work on an immutable [`Snapshot`]; writers are serialized and
//! publish a new snapshot only once every file it refers to is on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, SecondsFormat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{self, AggregateReport, AnalysisQuery, AnalyticsError, Catalog, CentralityResult, CommunityResult, TimeGranularity};
use crate::fsutil::{atomic_write, resolve_relative};
use crate::index::{prepare_query, IndexError, PostingsIndex, Snippet};
use crate::ingest::{
    derive_facets, discover, extract_properties, DetectedFacets, DocumentId, DocumentProperties, IdGenerator,
    IngestError, LanguageProfile, RawDocument,
};
use crate::linkgraph::{self, GraphBuildReport, LinkError, LogicalLinkGraph, SimilarityMeasure};
use crate::manifest::{
    read_global_manifest, resolve_all, AtomicElement, DocumentManifest, GlobalEntry, GlobalManifest, ManifestError,
    ManifestStore, MetadataRef, ResourceType, MDTYPE_PRESENTATION, MDTYPE_PREVISUALIZATION,
};
use crate::resources::DEFAULTS;
use crate::textproc::{
    build_document_frequency, payload_to_csv, present, previsualize, tfidf, tokenize, transform, vector_from_csv,
    Label, Payload, PresentationKind, Resources, TermVector, TextError, TransformationKind, TransformationOp,
};
use crate::walktrap::DEFAULT_WALK_LENGTH;

pub const DEFAULT_LANGUAGES: [&str; 2] = ["fr", "en"];
pub const DICTIONARY_RESOURCE: &str = "dict-marketing";
pub const TAGCLOUD_LABEL: &str = "tagcloud";
pub const TAGCLOUD_TERMS: usize = 30;

pub fn stopwords_resource(language: &str) -> String {
    format!("stopwords-{language}")
}

pub fn thesaurus_resource(language: &str) -> String {
    format!("thesaurus-{language}")
}

/// Label whose term frequencies feed top terms and tag clouds.
pub fn aggregation_label() -> Label {
    Label::new(TransformationKind::StopwordRemoval, PresentationKind::TermFrequencyVector)
}

/// Labels whose weights are kept in memory for aggregation and linking.
pub fn vector_labels() -> impl Iterator<Item = Label> {
    Label::all().filter(|l| {
        matches!(
            l.presentation,
            PresentationKind::TermFrequencyVector | PresentationKind::TfidfVector
        )
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub store_root: PathBuf,
    /// Detection profiles in priority order; the first one also serves
    /// documents of undetermined language.
    pub languages: Vec<String>,
}

impl EngineConfig {
    pub fn new(store_root: impl Into<PathBuf>) -> Self {
        Self {
            store_root: store_root.into(),
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Invalid,
    Internal,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("store at {0} is not initialized")]
    Uninitialized(PathBuf),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl EngineError {
    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            Self::Ingest(_) | Self::InvalidArgument(_) => Invalid,
            Self::Text(e) => match e {
                TextError::UnknownName { .. } | TextError::InvalidOp(_) => Invalid,
                _ => Internal,
            },
            Self::Manifest(e) => match e {
                ManifestError::NotFound(_) | ManifestError::NotRegistered(_) => NotFound,
                _ => Internal,
            },
            Self::Index(e) => match e {
                IndexError::UnknownLabel(_) | IndexError::UnknownDocument(_) => NotFound,
                _ => Internal,
            },
            Self::Link(e) => match e {
                LinkError::NotFound(_) => NotFound,
                LinkError::UnknownMeasure(_) | LinkError::BadLinkName(_) | LinkError::IncompatiblePresentation { .. } => {
                    Invalid
                }
                _ => Internal,
            },
            Self::Analytics(e) => match e {
                AnalyticsError::TooFewNodes(_) | AnalyticsError::InvalidQuery(_) => Invalid,
                _ => NotFound,
            },
            Self::Uninitialized(_) | Self::Io { .. } => Internal,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn artifact_uri(id: &DocumentId, file_name: &str) -> String {
    format!("presentation/{id}/{file_name}")
}

pub fn format_timestamp(secs: i64) -> String {
    DateTime::from_timestamp(secs, 0)
        .unwrap_or_default()
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// One row of the document list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub id: DocumentId,
    pub title: Option<String>,
    pub date: Option<String>,
    pub facets: BTreeMap<String, String>,
}

/// Offset/limit window over the id-ordered document list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub offset: usize,
    /// `None` returns everything after `offset`.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentList {
    /// Matching documents before paging.
    pub count: usize,
    pub offset: usize,
    pub documents: Vec<DocumentSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub label: Label,
    /// One group per query term: the forms actually matched.
    pub groups: Vec<BTreeSet<String>>,
    pub all_terms: bool,
    pub ids: BTreeSet<DocumentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightResult {
    pub id: DocumentId,
    pub label: Label,
    pub window: usize,
    pub terms: BTreeSet<String>,
    pub snippets: Vec<Snippet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestedDocument {
    pub id: DocumentId,
    pub source: PathBuf,
    pub facets: DetectedFacets,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestFailure {
    pub source: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub ingested: Vec<IngestedDocument>,
    pub failed: Vec<IngestFailure>,
    /// Documents in the store after the batch.
    pub total_documents: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checked: usize,
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Immutable view of the whole store.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub root: PathBuf,
    pub languages: Vec<String>,
    pub global: GlobalManifest,
    pub resources: Resources,
    pub manifests: ManifestStore,
    /// Manifest files that failed to load.
    pub broken: Vec<(PathBuf, String)>,
    /// Inverted indexes keyed by classic label.
    pub indexes: BTreeMap<Label, PostingsIndex>,
    /// TF and TF-IDF vectors by label.
    pub vectors: BTreeMap<Label, BTreeMap<DocumentId, TermVector>>,
}

static EMPTY_VECTORS: BTreeMap<DocumentId, TermVector> = BTreeMap::new();

impl Snapshot {
    pub fn catalog(&self) -> Catalog<'_> {
        Catalog {
            manifests: &self.manifests,
            indexes: &self.indexes,
            term_frequencies: self.vectors.get(&aggregation_label()).unwrap_or(&EMPTY_VECTORS),
            resources: &self.resources,
            languages: &self.languages,
        }
    }

    pub fn len(&self) -> usize {
        self.manifests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifests.is_empty()
    }

    /// Language whose resources process a document detected as `language`.
    pub fn processing_language<'a>(&'a self, language: &'a str) -> &'a str {
        if self.languages.iter().any(|l| l == language) {
            language
        } else {
            &self.languages[0]
        }
    }

    pub fn language_profiles(&self) -> Result<Vec<LanguageProfile>, EngineError> {
        self.languages
            .iter()
            .map(|l| {
                Ok(LanguageProfile {
                    code: l.clone(),
                    stopwords: self.resources.words(&stopwords_resource(l))?.clone(),
                })
            })
            .collect()
    }

    pub fn transformation_op(&self, kind: TransformationKind, language: &str) -> Result<TransformationOp, EngineError> {
        let resource = match kind {
            TransformationKind::StopwordRemoval => Some(stopwords_resource(self.processing_language(language))),
            TransformationKind::DictionaryFilter => Some(DICTIONARY_RESOURCE.to_string()),
            _ => None,
        };
        Ok(TransformationOp::new(kind, resource)?)
    }

    pub fn documents(&self, q: &AnalysisQuery, page: Page) -> Result<DocumentList, EngineError> {
        let ids = analytics::filter(&self.catalog(), q)?;
        let documents: Vec<DocumentSummary> = ids
            .iter()
            .skip(page.offset)
            .take(page.limit.unwrap_or(usize::MAX))
            .filter_map(|id| self.manifests.get(id))
            .map(|m| DocumentSummary {
                id: m.doc_id.clone(),
                title: m.atomic_section.get(&AtomicElement::Title).cloned(),
                date: m.atomic_section.get(&AtomicElement::Date).cloned(),
                facets: m.prm_section.iter().map(|l| (l.name.clone(), l.value.clone())).collect(),
            })
            .collect();
        Ok(DocumentList {
            count: ids.len(),
            offset: page.offset,
            documents,
        })
    }

    pub fn filter(&self, q: &AnalysisQuery) -> Result<BTreeSet<DocumentId>, EngineError> {
        Ok(analytics::filter(&self.catalog(), q)?)
    }

    /// Reads the stored manifest file.
    pub fn manifest(&self, id: &DocumentId) -> Result<DocumentManifest, EngineError> {
        Ok(self.manifests.read_manifest(id)?)
    }

    pub fn manifest_raw(&self, id: &DocumentId) -> Result<String, EngineError> {
        Ok(self.manifests.read_raw(id)?)
    }

    pub fn global_manifest(&self) -> Result<GlobalManifest, EngineError> {
        Ok(read_global_manifest(&self.root)?)
    }

    pub fn search(
        &self,
        terms: &[String],
        label: Label,
        thesaurus: Option<&str>,
        all_terms: bool,
    ) -> Result<SearchResult, EngineError> {
        let cat = self.catalog();
        let index = cat.index(&label)?;
        let groups = prepare_query(terms, label.transformation, cat.thesaurus(thesaurus)?, &self.languages);
        Ok(SearchResult {
            label,
            ids: index.search(&groups, all_terms),
            groups,
            all_terms,
        })
    }

    /// Snippets from the classic text of `label`'s transformation.
    pub fn highlights(
        &self,
        id: &DocumentId,
        terms: &[String],
        label: Label,
        thesaurus: Option<&str>,
        window: usize,
    ) -> Result<HighlightResult, EngineError> {
        if window == 0 {
            return Err(EngineError::InvalidArgument("window must be positive".into()));
        }
        let classic = Label::classic(label.transformation);
        let cat = self.catalog();
        let index = cat.index(&classic)?;
        let m = self
            .manifests
            .get(id)
            .ok_or_else(|| EngineError::Index(IndexError::UnknownDocument(id.to_string())))?;
        let text = self.read_reference(m, &classic.to_string())?;
        let terms: BTreeSet<String> = prepare_query(terms, label.transformation, cat.thesaurus(thesaurus)?, &self.languages)
            .into_iter()
            .flatten()
            .collect();
        Ok(HighlightResult {
            id: id.clone(),
            label: classic,
            window,
            snippets: index.highlights(id, &text, &terms, window)?,
            terms,
        })
    }

    fn read_reference(&self, m: &DocumentManifest, label: &str) -> Result<String, EngineError> {
        let r = m
            .reference(label)
            .ok_or_else(|| EngineError::Index(IndexError::UnknownLabel(label.to_string())))?;
        let path = resolve_relative(&self.root, &r.xptr)
            .ok_or_else(|| EngineError::InvalidArgument(format!("bad XPTR {}", r.xptr)))?;
        fs::read_to_string(&path).map_err(io_err(&path))
    }

    pub fn aggregate(
        &self,
        q: &AnalysisQuery,
        facet: &str,
        granularity: TimeGranularity,
        k_terms: usize,
    ) -> Result<AggregateReport, EngineError> {
        let cat = self.catalog();
        let ids = analytics::filter(&cat, q)?;
        Ok(analytics::aggregate(&cat, &ids, facet, granularity, k_terms)?)
    }

    /// Loads a stored graph by exact or alias link name.
    pub fn graph(&self, link_name: &str) -> Result<LogicalLinkGraph, EngineError> {
        let canonical = link_name
            .parse::<SimilarityMeasure>()
            .map(|m| m.link_name())
            .unwrap_or_else(|_| link_name.to_string());
        if canonical.contains('/') || canonical.starts_with('.') {
            return Err(LinkError::NotFound(link_name.to_string()).into());
        }
        Ok(linkgraph::load_graph(&self.root, &canonical)?)
    }

    pub fn stored_graphs(&self) -> Vec<String> {
        linkgraph::stored_graphs(&self.root)
    }

    pub fn communities(
        &self,
        link_name: &str,
        q: &AnalysisQuery,
        threshold: Option<f64>,
        walk_length: Option<usize>,
    ) -> Result<CommunityResult, EngineError> {
        let g = self.graph(link_name)?;
        let ids = self.filter(q)?;
        let sub = analytics::threshold_subgraph(&g, &ids, threshold);
        Ok(analytics::communities(&sub, walk_length.unwrap_or(DEFAULT_WALK_LENGTH)))
    }

    pub fn centrality(
        &self,
        link_name: &str,
        q: &AnalysisQuery,
        threshold: Option<f64>,
    ) -> Result<CentralityResult, EngineError> {
        let g = self.graph(link_name)?;
        let ids = self.filter(q)?;
        Ok(analytics::centrality(&analytics::threshold_subgraph(&g, &ids, threshold))?)
    }

    /// Schema validation of every manifest file plus the referential
    /// integrity sweep and the global manifest.
    pub fn validate_all(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (path, reason) in &self.broken {
            report.problems.push(format!("{}: {reason}", path.display()));
        }
        for id in self.manifests.ids() {
            report.checked += 1;
            if let Err(e) = self.manifests.read_manifest(id).and_then(|m| m.validate()) {
                report.problems.push(format!("{id}: {e}"));
            }
        }
        for (id, xptr) in self.manifests.dangling_references() {
            report.problems.push(format!("{id}: dangling reference {xptr}"));
        }
        if let Err(e) = self.global_manifest().and_then(|g| Ok(g.validate()?)) {
            report.problems.push(format!("global manifest: {e}"));
        }
        report
    }
}

pub struct Engine {
    config: EngineConfig,
    state: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
    ids: IdGenerator,
}

struct Prepared {
    source: PathBuf,
    raw: RawDocument,
    text: String,
    properties: DocumentProperties,
    facets: DetectedFacets,
}

struct Materialized {
    manifest: DocumentManifest,
    term_frequencies: BTreeMap<TransformationKind, TermVector>,
    classic: BTreeMap<TransformationKind, String>,
}

impl Engine {
    /// Opens the store, creating it with the default global resources if
    /// needed.
    pub fn open(config: EngineConfig) -> Result<Self, EngineError> {
        let root = &config.store_root;
        fs::create_dir_all(root).map_err(io_err(root))?;
        if !ManifestStore::global_path(root).is_file() {
            install_default_resources(root)?;
        }
        Self::open_existing(config)
    }

    /// Opens a store that must already hold a global manifest.
    pub fn open_existing(config: EngineConfig) -> Result<Self, EngineError> {
        if config.languages.is_empty() {
            return Err(EngineError::InvalidArgument("at least one language is required".into()));
        }
        let root = config.store_root.clone();
        if !ManifestStore::global_path(&root).is_file() {
            return Err(EngineError::Uninitialized(root));
        }
        let global = read_global_manifest(&root)?;
        global.validate()?;
        let resources = resolve_all(&root, &global)?;
        let (manifests, broken) = ManifestStore::open(&root)?;
        for (path, e) in &broken {
            log::warn!("unreadable manifest {}: {e}", path.display());
        }
        let mut snapshot = Snapshot {
            root,
            languages: config.languages.clone(),
            global,
            resources,
            manifests,
            broken: broken.into_iter().map(|(p, e)| (p, e.to_string())).collect(),
            indexes: BTreeMap::new(),
            vectors: BTreeMap::new(),
        };
        snapshot.language_profiles()?;
        load_vectors(&mut snapshot);
        load_indexes(&mut snapshot)?;
        Ok(Self {
            config,
            state: RwLock::new(Arc::new(snapshot)),
            writer: Mutex::new(()),
            ids: IdGenerator::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn root(&self) -> &Path {
        &self.config.store_root
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.state.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn publish(&self, s: Snapshot) {
        *self.state.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(s);
    }

    /// Ingests every document under `<pond_root>/<company>/<category>/`.
    /// Per-document failures are reported, not fatal. TF-IDF artifacts of
    /// the whole store are recomputed against the new corpus statistics.
    pub fn ingest(&self, pond_root: &Path) -> Result<IngestReport, EngineError> {
        let _writer = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut next = (*self.snapshot()).clone();
        let profiles = next.language_profiles()?;
        let files = discover(pond_root)?;

        let prepared: Vec<Result<Prepared, IngestFailure>> = files
            .par_iter()
            .map(|path| prepare(path, pond_root, &profiles))
            .collect();
        let mut report = IngestReport::default();
        let mut batch = Vec::new();
        for p in prepared {
            match p {
                Ok(p) => batch.push((self.ids.next(), p)),
                Err(f) => report.failed.push(f),
            }
        }

        let materialized: Vec<Result<(DocumentId, Materialized), IngestFailure>> = batch
            .par_iter()
            .map(|(id, p)| {
                materialize(&next, id, p)
                    .map(|m| (id.clone(), m))
                    .map_err(|e| IngestFailure {
                        source: p.source.clone(),
                        reason: e.to_string(),
                    })
            })
            .collect();
        let mut done = Vec::new();
        for (m, (id, p)) in materialized.into_iter().zip(&batch) {
            match m {
                Ok(m) => {
                    report.ingested.push(IngestedDocument {
                        id: id.clone(),
                        source: p.source.clone(),
                        facets: p.facets.clone(),
                    });
                    done.push(m);
                }
                Err(f) => report.failed.push(f),
            }
        }

        for (id, m) in &done {
            for (kind, tf) in &m.term_frequencies {
                next.vectors
                    .entry(Label::new(*kind, PresentationKind::TermFrequencyVector))
                    .or_default()
                    .insert(id.clone(), tf.clone());
            }
        }
        write_tfidf(&mut next)?;

        for (id, m) in done {
            for (kind, text) in &m.classic {
                next.indexes
                    .entry(Label::classic(*kind))
                    .or_insert_with(|| PostingsIndex::new(Label::classic(*kind)))
                    .index_text(&id, text);
            }
            next.manifests.write_manifest(m.manifest)?;
        }
        write_indexes(&next)?;
        report.total_documents = next.len();
        report.failed.sort_by(|a, b| a.source.cmp(&b.source));
        for f in &report.failed {
            log::warn!("skipped {}: {}", f.source.display(), f.reason);
        }
        self.publish(next);
        Ok(report)
    }

    /// Builds and stores the complete graph for `measure`.
    pub fn build_links(&self, measure: SimilarityMeasure) -> Result<GraphBuildReport, EngineError> {
        let _writer = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let snapshot = self.snapshot();
        let vectors = snapshot
            .vectors
            .get(&measure.presentation_label)
            .unwrap_or(&EMPTY_VECTORS);
        let (graph, report) = linkgraph::build_graph(vectors, measure);
        linkgraph::store_graph(&snapshot.root, &graph, Some(&report))?;
        Ok(report)
    }
}

fn install_default_resources(root: &Path) -> Result<(), EngineError> {
    let mut global = GlobalManifest::default();
    for (name, file, kind, contents) in DEFAULTS {
        let location = format!("global/{file}");
        let path = root.join(&location);
        if !path.exists() {
            atomic_write(&path, contents.as_bytes()).map_err(io_err(&path))?;
        }
        global.entries.push(GlobalEntry {
            name: name.to_string(),
            location,
            kind: ResourceType::parse(kind).expect("default resource kinds are valid"),
        });
    }
    let (store, _) = ManifestStore::open(root)?;
    store.write_global_manifest(&global)?;
    Ok(())
}

fn load_vectors(s: &mut Snapshot) {
    let root = s.root.clone();
    for label in vector_labels() {
        let key = label.to_string();
        let loaded: BTreeMap<DocumentId, TermVector> = s
            .manifests
            .manifests()
            .collect::<Vec<_>>()
            .par_iter()
            .filter_map(|m| {
                let path = resolve_relative(&root, &m.reference(&key)?.xptr)?;
                let v = vector_from_csv(&fs::read_to_string(path).ok()?).ok()?;
                Some((m.doc_id.clone(), v))
            })
            .collect();
        s.vectors.insert(label, loaded);
    }
}

fn index_path(root: &Path, label: &Label) -> PathBuf {
    root.join("index").join(format!("{label}.idx"))
}

/// Loads each classic index snapshot, rebuilding it from the classic
/// artifacts when it is missing, unreadable or covers other documents.
fn load_indexes(s: &mut Snapshot) -> Result<(), EngineError> {
    let ids: BTreeSet<&DocumentId> = s.manifests.ids().collect();
    let mut rebuilt = false;
    for kind in TransformationKind::ALL {
        let label = Label::classic(kind);
        let fresh = fs::read_to_string(index_path(&s.root, &label))
            .ok()
            .and_then(|c| PostingsIndex::from_snapshot(&c).ok())
            .filter(|ix| ix.label == label && ix.documents().collect::<BTreeSet<_>>() == ids);
        let index = match fresh {
            Some(ix) => ix,
            None => {
                log::warn!("rebuilding index {label} from classic artifacts");
                rebuilt = true;
                let mut ix = PostingsIndex::new(label);
                let key = label.to_string();
                for m in s.manifests.manifests() {
                    if let Ok(text) = s.read_reference(m, &key) {
                        ix.index_text(&m.doc_id, &text);
                    }
                }
                ix
            }
        };
        s.indexes.insert(label, index);
    }
    if rebuilt {
        write_indexes(s)?;
    }
    Ok(())
}

fn write_indexes(s: &Snapshot) -> Result<(), EngineError> {
    for (label, ix) in &s.indexes {
        let path = index_path(&s.root, label);
        atomic_write(&path, ix.to_snapshot().as_bytes()).map_err(io_err(&path))?;
    }
    Ok(())
}

fn prepare(path: &Path, pond_root: &Path, profiles: &[LanguageProfile]) -> Result<Prepared, IngestFailure> {
    let fail = |e: IngestError| IngestFailure {
        source: path.to_path_buf(),
        reason: e.to_string(),
    };
    let raw = RawDocument::load(path).map_err(fail)?;
    let facets = derive_facets(&raw, pond_root, profiles).map_err(fail)?;
    let text = raw.text().map_err(fail)?;
    let properties = extract_properties(&raw).map_err(fail)?;
    Ok(Prepared {
        source: path.to_path_buf(),
        raw,
        text,
        properties,
        facets,
    })
}

/// Copies the raw document and writes every artifact except TF-IDF, which
/// needs corpus statistics. Returns the manifest to be written once the
/// TF-IDF files exist.
fn materialize(s: &Snapshot, id: &DocumentId, p: &Prepared) -> Result<Materialized, EngineError> {
    let root = &s.root;
    let write = |uri: &str, bytes: &[u8]| -> Result<(), EngineError> {
        let path = root.join(uri);
        atomic_write(&path, bytes).map_err(io_err(&path))
    };
    let file_name = p
        .source
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "document".into());
    let raw_uri = format!("raw/{id}/{file_name}");
    write(&raw_uri, &p.raw.bytes)?;
    if let Some(sidecar) = &p.raw.sidecar_text {
        write(&format!("{raw_uri}.txt"), sidecar.as_bytes())?;
    }

    let mut m = DocumentManifest::new(id.clone(), raw_uri);
    let props = &p.properties;
    let f = &p.facets;
    for (el, v) in [
        (AtomicElement::Title, props.title.clone()),
        (AtomicElement::Creator, props.creator.clone()),
        (AtomicElement::Date, format_timestamp(props.created_at)),
        (AtomicElement::Modified, format_timestamp(props.modified_at)),
        (AtomicElement::Format, f.mime_type.clone()),
        (AtomicElement::Language, f.language.clone()),
        (AtomicElement::Extent, props.size_bytes.to_string()),
    ] {
        m.atomic_section.insert(el, v);
    }
    m.set_physical_link("company", &f.company);
    m.set_physical_link("category", &f.business_category);
    m.set_physical_link("mime", &f.mime_type);
    m.set_physical_link("language", &f.language);

    let language = s.processing_language(&f.language);
    let tokens = tokenize(&p.text);
    let mut term_frequencies = BTreeMap::new();
    let mut classic = BTreeMap::new();
    for kind in TransformationKind::ALL {
        let op = s.transformation_op(kind, language)?;
        let transformed = transform(&tokens, &op, &s.resources, language)?;
        for presentation in PresentationKind::ALL {
            let label = Label::new(kind, presentation);
            let uri = artifact_uri(id, &label.file_name());
            m.set_reference(MetadataRef {
                label: label.to_string(),
                xptr: uri.clone(),
                mdtype: MDTYPE_PRESENTATION.to_string(),
            });
            let payload = match presentation {
                PresentationKind::TfidfVector => continue,
                PresentationKind::ClassicPresentation if kind == TransformationKind::OriginalVersion => {
                    Payload::Text(p.text.clone())
                }
                _ => present(&transformed, presentation, None)?,
            };
            match &payload {
                Payload::Text(t) => {
                    write(&uri, t.as_bytes())?;
                    classic.insert(kind, t.clone());
                }
                other => {
                    write(&uri, payload_to_csv(other)?.as_bytes())?;
                    if let Payload::Frequencies(tf) = other {
                        term_frequencies.insert(kind, tf.clone());
                    }
                }
            }
        }
    }

    let cloud_source = Payload::Frequencies(term_frequencies[&TransformationKind::StopwordRemoval].clone());
    let cloud = previsualize(&cloud_source, TAGCLOUD_TERMS)?;
    let cloud_uri = artifact_uri(id, &format!("{TAGCLOUD_LABEL}.csv"));
    let cloud_payload = Payload::Frequencies(TermVector::from_entries(cloud));
    write(&cloud_uri, payload_to_csv(&cloud_payload)?.as_bytes())?;
    m.set_reference(MetadataRef {
        label: TAGCLOUD_LABEL.to_string(),
        xptr: cloud_uri,
        mdtype: MDTYPE_PREVISUALIZATION.to_string(),
    });
    m.validate()?;
    Ok(Materialized {
        manifest: m,
        term_frequencies,
        classic,
    })
}

/// Recomputes TF-IDF for every document from the current TF vectors.
fn write_tfidf(s: &mut Snapshot) -> Result<(), EngineError> {
    for kind in TransformationKind::ALL {
        let tf_label = Label::new(kind, PresentationKind::TermFrequencyVector);
        let label = Label::new(kind, PresentationKind::TfidfVector);
        let Some(tfs) = s.vectors.get(&tf_label) else {
            continue;
        };
        if tfs.is_empty() {
            continue;
        }
        let stats = build_document_frequency(tfs.values());
        let root = &s.root;
        let weighted: Result<BTreeMap<DocumentId, TermVector>, EngineError> = tfs
            .par_iter()
            .map(|(id, tf)| {
                let v = tfidf(tf, &stats)?;
                let path = root.join(artifact_uri(id, &label.file_name()));
                let csv = payload_to_csv(&Payload::Tfidf(v.clone()))?;
                atomic_write(&path, csv.as_bytes()).map_err(io_err(&path))?;
                Ok((id.clone(), v))
            })
            .collect();
        s.vectors.insert(label, weighted?);
    }
    Ok(())
}
