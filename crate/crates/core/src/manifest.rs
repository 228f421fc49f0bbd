//! Per-document XML manifests and the global manifest.
//!
//! A manifest has three sections: atomic Dublin-Core-style properties
//! (`dmdSec role="atomic"`), pointers to non-atomic metadata
//! (`dmdSec role="refs"`), and physical links (`prmSec`). The normative DTDs
//! live in `schema/`. Serialization is canonical: UTF-8, two-space indent,
//! attributes in sorted order, so writing the same manifest twice yields the
//! same bytes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::{atomic_write, resolve_relative};
use crate::ingest::DocumentId;
use crate::resources::{parse_word_list, Thesaurus};
use crate::textproc::{Resource, Resources};

pub const ORIGINAL_LABEL: &str = "original";
pub const MDTYPE_ORIGINAL: &str = "original";
pub const MDTYPE_PRESENTATION: &str = "presentation";
pub const MDTYPE_PREVISUALIZATION: &str = "previsualization";

const DC_NS: &str = "http://purl.org/dc/elements/1.1/";
const DCTERMS_NS: &str = "http://purl.org/dc/terms/";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("storage failure on {path:?}: {source}")]
    StorageFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no manifest for {0}")]
    NotFound(String),
    #[error("parse error at byte {offset}: {reason}")]
    ParseError { offset: u64, reason: String },
    #[error("resource {0:?} is not registered in the global manifest")]
    NotRegistered(String),
    #[error("resource {name:?} unreadable: {reason}")]
    UnreadableResource { name: String, reason: String },
}

/// The fixed atomic element table. Declaration order is serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomicElement {
    Identifier,
    Title,
    Creator,
    Date,
    Modified,
    Format,
    Language,
    Extent,
}

impl AtomicElement {
    pub const ALL: [AtomicElement; 8] = [
        Self::Identifier,
        Self::Title,
        Self::Creator,
        Self::Date,
        Self::Modified,
        Self::Format,
        Self::Language,
        Self::Extent,
    ];

    pub fn qualified_name(self) -> &'static str {
        match self {
            Self::Identifier => "dc:identifier",
            Self::Title => "dc:title",
            Self::Creator => "dc:creator",
            Self::Date => "dc:date",
            Self::Modified => "dcterms:modified",
            Self::Format => "dc:format",
            Self::Language => "dc:language",
            Self::Extent => "dcterms:extent",
        }
    }

    pub fn from_qualified(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.qualified_name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRef {
    pub label: String,
    pub xptr: String,
    pub mdtype: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalLink {
    pub name: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentManifest {
    pub doc_id: DocumentId,
    pub atomic_section: BTreeMap<AtomicElement, String>,
    pub ref_section: Vec<MetadataRef>,
    pub prm_section: Vec<PhysicalLink>,
}

impl DocumentManifest {
    /// A manifest holding only the identifier and the pointer to the original.
    pub fn new(doc_id: DocumentId, original_xptr: impl Into<String>) -> Self {
        Self {
            atomic_section: BTreeMap::from([(AtomicElement::Identifier, doc_id.to_string())]),
            doc_id,
            ref_section: vec![MetadataRef {
                label: ORIGINAL_LABEL.to_string(),
                xptr: original_xptr.into(),
                mdtype: MDTYPE_ORIGINAL.to_string(),
            }],
            prm_section: Vec::new(),
        }
    }

    pub fn physical_link(&self, name: &str) -> Option<&str> {
        self.prm_section
            .iter()
            .find(|l| l.name == name)
            .map(|l| l.value.as_str())
    }

    pub fn reference(&self, label: &str) -> Option<&MetadataRef> {
        self.ref_section.iter().find(|r| r.label == label)
    }

    /// Adds or replaces the reference with the same label.
    pub fn set_reference(&mut self, r: MetadataRef) {
        match self.ref_section.iter_mut().find(|x| x.label == r.label) {
            Some(slot) => *slot = r,
            None => self.ref_section.push(r),
        }
    }

    /// Adds or replaces the physical link with the same name.
    pub fn set_physical_link(&mut self, name: impl Into<String>, value: impl Into<String>) {
        let (name, value) = (name.into(), value.into());
        match self.prm_section.iter_mut().find(|l| l.name == name) {
            Some(slot) => slot.value = value,
            None => self.prm_section.push(PhysicalLink { name, value }),
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let violation = |m: String| Err(ManifestError::SchemaViolation(m));
        match self.atomic_section.get(&AtomicElement::Identifier) {
            Some(id) if *id == self.doc_id.to_string() => {}
            Some(id) => return violation(format!("identifier {id:?} differs from {}", self.doc_id)),
            None => return violation("missing dc:identifier".into()),
        }
        if self.reference(ORIGINAL_LABEL).is_none() {
            return violation("no reference to the original document".into());
        }
        let mut labels = HashSet::new();
        for r in &self.ref_section {
            if !labels.insert(r.label.as_str()) {
                return violation(format!("duplicate reference label {:?}", r.label));
            }
            if r.label.is_empty() || r.mdtype.is_empty() {
                return violation("empty LABEL or MDTYPE".into());
            }
            if resolve_relative(Path::new(""), &r.xptr).is_none() {
                return violation(format!("XPTR {:?} escapes the store root", r.xptr));
            }
        }
        let mut names = HashSet::new();
        for l in &self.prm_section {
            if !names.insert(l.name.as_str()) {
                return violation(format!("duplicate physical link {:?}", l.name));
            }
            if l.name.is_empty() || l.value.is_empty() {
                return violation(format!("empty physical link {:?}={:?}", l.name, l.value));
            }
        }
        Ok(())
    }

    /// Canonical XML form.
    pub fn to_xml(&self) -> String {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        out.push_str("<!DOCTYPE manifest SYSTEM \"manifest.dtd\">\n");
        let _ = writeln!(
            out,
            "<manifest OBJID=\"{}\" xmlns:dc=\"{DC_NS}\" xmlns:dcterms=\"{DCTERMS_NS}\">",
            escape(self.doc_id.to_string())
        );
        out.push_str("  <dmdSec role=\"atomic\">\n    <mdWrap MDTYPE=\"DC\">\n");
        for el in AtomicElement::ALL {
            if let Some(v) = self.atomic_section.get(&el) {
                let name = el.qualified_name();
                let _ = writeln!(out, "      <{name}>{}</{name}>", escape_text(v));
            }
        }
        out.push_str("    </mdWrap>\n  </dmdSec>\n");
        out.push_str("  <dmdSec role=\"refs\">\n");
        for r in &self.ref_section {
            let _ = writeln!(
                out,
                "    <mdRef LABEL=\"{}\" MDTYPE=\"{}\" XPTR=\"{}\"/>",
                escape_attr(&r.label),
                escape_attr(&r.mdtype),
                escape_attr(&r.xptr)
            );
        }
        out.push_str("  </dmdSec>\n");
        out.push_str("  <prmSec>\n");
        for l in &self.prm_section {
            let _ = writeln!(
                out,
                "    <prm name=\"{}\" value=\"{}\"/>",
                escape_attr(&l.name),
                escape_attr(&l.value)
            );
        }
        out.push_str("  </prmSec>\n</manifest>\n");
        out
    }

    pub fn from_xml(xml: &str) -> Result<Self, ManifestError> {
        ManifestParser::new(xml).parse()
    }
}

/// Carriage returns would be folded into newlines by any conforming parser.
fn escape_text(s: &str) -> String {
    escape(s).replace('\r', "&#13;")
}

/// Attribute-value normalization turns raw tabs and line breaks into spaces.
fn escape_attr(s: &str) -> String {
    escape(s)
        .replace('\t', "&#9;")
        .replace('\n', "&#10;")
        .replace('\r', "&#13;")
}

fn parse_error(offset: u64, reason: impl Into<String>) -> ManifestError {
    ManifestError::ParseError {
        offset,
        reason: reason.into(),
    }
}

fn attributes(e: &BytesStart<'_>, offset: u64) -> Result<BTreeMap<String, String>, ManifestError> {
    let mut out = BTreeMap::new();
    for a in e.attributes() {
        let a = a.map_err(|err| parse_error(offset, err.to_string()))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a
            .unescape_value()
            .map_err(|err| parse_error(offset, err.to_string()))?
            .into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

fn required(attrs: &BTreeMap<String, String>, key: &str, offset: u64) -> Result<String, ManifestError> {
    attrs
        .get(key)
        .cloned()
        .ok_or_else(|| parse_error(offset, format!("missing attribute {key}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    None,
    Atomic,
    Wrap,
    Refs,
    Prm,
}

struct ManifestParser<'a> {
    reader: Reader<&'a [u8]>,
}

impl<'a> ManifestParser<'a> {
    fn new(xml: &'a str) -> Self {
        // Untrimmed: element values keep edge whitespace; indentation between
        // elements is skipped below.
        Self {
            reader: Reader::from_str(xml),
        }
    }

    fn parse(mut self) -> Result<DocumentManifest, ManifestError> {
        let mut doc_id: Option<DocumentId> = None;
        let mut atomic = BTreeMap::new();
        let mut refs = Vec::new();
        let mut prms = Vec::new();
        let mut section = Section::None;
        let mut open_element: Option<AtomicElement> = None;
        let mut depth = 0usize;
        let mut closed_root = false;
        loop {
            let offset = self.reader.buffer_position();
            let event = self
                .reader
                .read_event()
                .map_err(|e| parse_error(self.reader.error_position(), e.to_string()))?;
            match event {
                Event::Eof => break,
                Event::Decl(_) | Event::DocType(_) | Event::Comment(_) | Event::PI(_) => {}
                Event::Text(t) if open_element.is_none() && t.iter().all(u8::is_ascii_whitespace) => {}
                _ if closed_root => return Err(parse_error(offset, "content after root element")),
                Event::Start(e) | Event::Empty(e) if depth == 0 => {
                    if e.name().as_ref() != b"manifest" {
                        return Err(parse_error(offset, "root element must be <manifest>"));
                    }
                    let attrs = attributes(&e, offset)?;
                    let id = required(&attrs, "OBJID", offset)?;
                    doc_id = Some(id.parse().map_err(|e| parse_error(offset, format!("{e}")))?);
                    depth = 1;
                }
                Event::Start(e) => {
                    let attrs = attributes(&e, offset)?;
                    let name = e.name();
                    match (section, name.as_ref()) {
                        (Section::None, b"dmdSec") => {
                            section = match required(&attrs, "role", offset)?.as_str() {
                                "atomic" => Section::Atomic,
                                "refs" => Section::Refs,
                                other => return Err(parse_error(offset, format!("unknown dmdSec role {other:?}"))),
                            };
                        }
                        (Section::None, b"prmSec") => section = Section::Prm,
                        (Section::Atomic, b"mdWrap") => section = Section::Wrap,
                        (Section::Wrap, raw) => {
                            let qname = String::from_utf8_lossy(raw);
                            let el = AtomicElement::from_qualified(&qname)
                                .ok_or_else(|| parse_error(offset, format!("element {qname} not in the namespace table")))?;
                            open_element = Some(el);
                            atomic.insert(el, String::new());
                        }
                        (_, raw) => {
                            return Err(parse_error(
                                offset,
                                format!("unexpected <{}>", String::from_utf8_lossy(raw)),
                            ))
                        }
                    }
                    depth += 1;
                }
                Event::Empty(e) => {
                    let attrs = attributes(&e, offset)?;
                    match (section, e.name().as_ref()) {
                        (Section::Refs, b"mdRef") => refs.push(MetadataRef {
                            label: required(&attrs, "LABEL", offset)?,
                            mdtype: required(&attrs, "MDTYPE", offset)?,
                            xptr: required(&attrs, "XPTR", offset)?,
                        }),
                        (Section::Prm, b"prm") => prms.push(PhysicalLink {
                            name: required(&attrs, "name", offset)?,
                            value: required(&attrs, "value", offset)?,
                        }),
                        (Section::Wrap, raw) => {
                            let qname = String::from_utf8_lossy(raw);
                            let el = AtomicElement::from_qualified(&qname).ok_or_else(|| {
                                parse_error(offset, format!("element {qname} not in the namespace table"))
                            })?;
                            atomic.insert(el, String::new());
                        }
                        (Section::None, b"prmSec") => {}
                        (Section::None, b"dmdSec") => {}
                        (_, raw) => {
                            return Err(parse_error(
                                offset,
                                format!("unexpected <{}/>", String::from_utf8_lossy(raw)),
                            ))
                        }
                    }
                }
                Event::Text(t) => {
                    let value = t.unescape().map_err(|e| parse_error(offset, e.to_string()))?;
                    match open_element {
                        Some(el) => atomic.entry(el).or_default().push_str(&value),
                        None => return Err(parse_error(offset, "unexpected text")),
                    }
                }
                Event::CData(_) => return Err(parse_error(offset, "CDATA is not allowed")),
                Event::End(_) => {
                    depth -= 1;
                    if open_element.take().is_none() {
                        section = match section {
                            Section::Wrap => Section::Atomic,
                            _ => Section::None,
                        };
                    }
                    if depth == 0 {
                        closed_root = true;
                    }
                }
            }
        }
        if !closed_root {
            return Err(parse_error(self.reader.buffer_position(), "unterminated <manifest>"));
        }
        let doc_id = doc_id.ok_or_else(|| parse_error(0, "missing <manifest>"))?;
        Ok(DocumentManifest {
            doc_id,
            atomic_section: atomic,
            ref_section: refs,
            prm_section: prms,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceType {
    Thesaurus,
    Dictionary,
    Stopwords,
    Taxonomy,
}

impl ResourceType {
    pub fn name(self) -> &'static str {
        match self {
            Self::Thesaurus => "thesaurus",
            Self::Dictionary => "dictionary",
            Self::Stopwords => "stopwords",
            Self::Taxonomy => "taxonomy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Thesaurus, Self::Dictionary, Self::Stopwords, Self::Taxonomy]
            .into_iter()
            .find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalEntry {
    pub name: String,
    pub location: String,
    #[serde(rename = "type")]
    pub kind: ResourceType,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalManifest {
    pub entries: Vec<GlobalEntry>,
}

impl GlobalManifest {
    pub fn entry(&self, name: &str) -> Option<&GlobalEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut names = HashSet::new();
        for e in &self.entries {
            if e.name.is_empty() {
                return Err(ManifestError::SchemaViolation("empty resource name".into()));
            }
            if !names.insert(e.name.as_str()) {
                return Err(ManifestError::SchemaViolation(format!(
                    "duplicate resource name {:?}",
                    e.name
                )));
            }
            if resolve_relative(Path::new(""), &e.location).is_none() {
                return Err(ManifestError::SchemaViolation(format!(
                    "location {:?} escapes the store root",
                    e.location
                )));
            }
        }
        Ok(())
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        out.push_str("<!DOCTYPE globalManifest SYSTEM \"global.dtd\">\n");
        out.push_str("<globalManifest>\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "  <resource location=\"{}\" name=\"{}\" type=\"{}\"/>",
                escape(e.location.as_str()),
                escape(e.name.as_str()),
                e.kind.name()
            );
        }
        out.push_str("</globalManifest>\n");
        out
    }

    pub fn from_xml(xml: &str) -> Result<Self, ManifestError> {
        let mut reader = Reader::from_str(xml);
        reader.config_mut().trim_text(true);
        let mut entries = Vec::new();
        let mut seen_root = false;
        loop {
            let offset = reader.buffer_position();
            let event = reader
                .read_event()
                .map_err(|e| parse_error(reader.error_position(), e.to_string()))?;
            match event {
                Event::Eof => break,
                Event::Decl(_) | Event::DocType(_) | Event::Comment(_) | Event::End(_) => {}
                Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"globalManifest" => {
                    seen_root = true;
                }
                Event::Empty(e) | Event::Start(e) if e.name().as_ref() == b"resource" && seen_root => {
                    let attrs = attributes(&e, offset)?;
                    let kind_name = required(&attrs, "type", offset)?;
                    entries.push(GlobalEntry {
                        name: required(&attrs, "name", offset)?,
                        location: required(&attrs, "location", offset)?,
                        kind: ResourceType::parse(&kind_name)
                            .ok_or_else(|| parse_error(offset, format!("unknown resource type {kind_name:?}")))?,
                    });
                }
                _ => return Err(parse_error(offset, "unexpected content in global manifest")),
            }
        }
        if !seen_root {
            return Err(parse_error(0, "missing <globalManifest>"));
        }
        Ok(Self { entries })
    }
}

/// Loads one registered resource from under the store root.
pub fn resolve_resource(root: &Path, global: &GlobalManifest, name: &str) -> Result<Resource, ManifestError> {
    let entry = global
        .entry(name)
        .ok_or_else(|| ManifestError::NotRegistered(name.to_string()))?;
    let unreadable = |reason: String| ManifestError::UnreadableResource {
        name: name.to_string(),
        reason,
    };
    let path = resolve_relative(root, &entry.location).ok_or_else(|| unreadable("location escapes the store root".into()))?;
    let contents = fs::read_to_string(&path).map_err(|e| unreadable(e.to_string()))?;
    Ok(match entry.kind {
        ResourceType::Thesaurus => Resource::Thesaurus(Thesaurus::parse(&contents)),
        ResourceType::Stopwords | ResourceType::Dictionary | ResourceType::Taxonomy => {
            Resource::Words(parse_word_list(&contents))
        }
    })
}

pub fn resolve_all(root: &Path, global: &GlobalManifest) -> Result<Resources, ManifestError> {
    let mut resources = Resources::default();
    for e in &global.entries {
        resources.by_name.insert(e.name.clone(), resolve_resource(root, global, &e.name)?);
    }
    Ok(resources)
}

/// File-backed manifest collection with an in-memory physical-link index.
#[derive(Debug, Clone)]
pub struct ManifestStore {
    root: PathBuf,
    manifests: BTreeMap<DocumentId, DocumentManifest>,
    links: BTreeMap<String, BTreeMap<String, BTreeSet<DocumentId>>>,
}

impl ManifestStore {
    pub fn manifests_dir(root: &Path) -> PathBuf {
        root.join("manifests")
    }

    pub fn global_path(root: &Path) -> PathBuf {
        root.join("global").join("global.xml")
    }

    /// Loads every manifest under `<root>/manifests`. Files that fail to
    /// parse are returned alongside the store instead of aborting the load.
    pub fn open(root: &Path) -> Result<(Self, Vec<(PathBuf, ManifestError)>), ManifestError> {
        let mut store = Self {
            root: root.to_path_buf(),
            manifests: BTreeMap::new(),
            links: BTreeMap::new(),
        };
        let mut broken = Vec::new();
        let dir = Self::manifests_dir(root);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((store, broken)),
            Err(source) => return Err(ManifestError::StorageFailure { path: dir, source }),
        };
        for entry in entries {
            let path = entry
                .map_err(|source| ManifestError::StorageFailure { path: dir.clone(), source })?
                .path();
            if path.extension().is_none_or(|e| e != "xml") {
                continue;
            }
            match Self::load_file(&path) {
                Ok(m) => store.index(m),
                Err(e) => broken.push((path, e)),
            }
        }
        Ok((store, broken))
    }

    fn load_file(path: &Path) -> Result<DocumentManifest, ManifestError> {
        let xml = fs::read_to_string(path).map_err(|source| ManifestError::StorageFailure {
            path: path.to_path_buf(),
            source,
        })?;
        DocumentManifest::from_xml(&xml)
    }

    fn unindex(&mut self, id: &DocumentId) {
        if let Some(old) = self.manifests.remove(id) {
            for l in &old.prm_section {
                if let Some(values) = self.links.get_mut(&l.name) {
                    if let Some(ids) = values.get_mut(&l.value) {
                        ids.remove(id);
                        if ids.is_empty() {
                            values.remove(&l.value);
                        }
                    }
                    if values.is_empty() {
                        self.links.remove(&l.name);
                    }
                }
            }
        }
    }

    fn index(&mut self, m: DocumentManifest) {
        self.unindex(&m.doc_id);
        for l in &m.prm_section {
            self.links
                .entry(l.name.clone())
                .or_default()
                .entry(l.value.clone())
                .or_default()
                .insert(m.doc_id.clone());
        }
        self.manifests.insert(m.doc_id.clone(), m);
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_of(&self, id: &DocumentId) -> PathBuf {
        Self::manifests_dir(&self.root).join(format!("{id}.xml"))
    }

    /// Validates, serializes and atomically replaces the manifest file.
    pub fn write_manifest(&mut self, m: DocumentManifest) -> Result<PathBuf, ManifestError> {
        m.validate()?;
        let path = self.path_of(&m.doc_id);
        atomic_write(&path, m.to_xml().as_bytes()).map_err(|source| ManifestError::StorageFailure {
            path: path.clone(),
            source,
        })?;
        self.index(m);
        Ok(path)
    }

    /// Reads the manifest from disk.
    pub fn read_manifest(&self, id: &DocumentId) -> Result<DocumentManifest, ManifestError> {
        let path = self.path_of(id);
        if !path.is_file() {
            return Err(ManifestError::NotFound(id.to_string()));
        }
        Self::load_file(&path)
    }

    pub fn read_raw(&self, id: &DocumentId) -> Result<String, ManifestError> {
        let path = self.path_of(id);
        fs::read_to_string(&path).map_err(|source| match source.kind() {
            std::io::ErrorKind::NotFound => ManifestError::NotFound(id.to_string()),
            _ => ManifestError::StorageFailure { path, source },
        })
    }

    /// In-memory copy, as indexed.
    pub fn get(&self, id: &DocumentId) -> Option<&DocumentManifest> {
        self.manifests.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &DocumentId> {
        self.manifests.keys()
    }

    pub fn manifests(&self) -> impl Iterator<Item = &DocumentManifest> {
        self.manifests.values()
    }

    pub fn len(&self) -> usize {
        self.manifests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifests.is_empty()
    }

    pub fn query_by_physical_link(&self, name: &str, value: &str) -> BTreeSet<DocumentId> {
        self.links
            .get(name)
            .and_then(|values| values.get(value))
            .cloned()
            .unwrap_or_default()
    }

    /// value -> cluster for one link name.
    pub fn clusters(&self, name: &str) -> BTreeMap<String, BTreeSet<DocumentId>> {
        self.links.get(name).cloned().unwrap_or_default()
    }

    pub fn link_names(&self) -> impl Iterator<Item = &String> {
        self.links.keys()
    }

    /// Every XPTR that does not resolve to an existing file under the root.
    pub fn dangling_references(&self) -> Vec<(DocumentId, String)> {
        let mut out = Vec::new();
        for m in self.manifests.values() {
            for r in &m.ref_section {
                let ok = resolve_relative(&self.root, &r.xptr).is_some_and(|p| p.is_file());
                if !ok {
                    out.push((m.doc_id.clone(), r.xptr.clone()));
                }
            }
        }
        out
    }

    pub fn write_global_manifest(&self, g: &GlobalManifest) -> Result<PathBuf, ManifestError> {
        g.validate()?;
        let path = Self::global_path(&self.root);
        atomic_write(&path, g.to_xml().as_bytes()).map_err(|source| ManifestError::StorageFailure {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    pub fn read_global_manifest(&self) -> Result<GlobalManifest, ManifestError> {
        read_global_manifest(&self.root)
    }
}

pub fn read_global_manifest(root: &Path) -> Result<GlobalManifest, ManifestError> {
    let path = ManifestStore::global_path(root);
    let xml = fs::read_to_string(&path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => ManifestError::NotFound("global manifest".into()),
        _ => ManifestError::StorageFailure { path, source },
    })?;
    GlobalManifest::from_xml(&xml)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u64) -> DocumentId {
        DocumentId::new(1_700_000_000_000_000_000, n)
    }

    fn sample() -> DocumentManifest {
        let mut m = DocumentManifest::new(id(1), "raw/D-1700000000000000000-1/report.pdf");
        m.atomic_section.insert(AtomicElement::Title, "Rapport <annuel> & \"bilan\"".into());
        m.atomic_section.insert(AtomicElement::Date, "2019-03-04T10:00:00Z".into());
        m.set_reference(MetadataRef {
            label: "original_version+classic_presentation".into(),
            xptr: "presentation/x/original_version+classic_presentation.txt".into(),
            mdtype: MDTYPE_PRESENTATION.into(),
        });
        for (n, v) in [("company", "acme"), ("category", "interview"), ("mime", "application/pdf"), ("language", "fr")] {
            m.set_physical_link(n, v);
        }
        m
    }

    #[test]
    fn xml_round_trip_and_shape() {
        let m = sample();
        let xml = m.to_xml();
        assert_eq!(DocumentManifest::from_xml(&xml).unwrap(), m);
        assert_eq!(xml.matches("<prm ").count(), 4);
        assert!(xml.contains("<dmdSec role=\"atomic\">"));
        assert!(xml.contains("&lt;annuel&gt; &amp; &quot;bilan&quot;"));
        assert_eq!(DocumentManifest::from_xml(&xml).unwrap().to_xml(), xml);
    }

    #[test]
    fn edge_whitespace_survives() {
        let mut m = sample();
        m.atomic_section.insert(AtomicElement::Format, " \tpadded\r\n ".into());
        m.atomic_section.insert(AtomicElement::Extent, " ".into());
        m.atomic_section.insert(AtomicElement::Creator, String::new());
        m.set_physical_link("company", "\tac\nme\r ");
        let xml = m.to_xml();
        assert!(!xml.contains('\r'));
        assert!(xml.contains("value=\"&#9;ac&#10;me&#13; \""));
        let back = DocumentManifest::from_xml(&xml).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_xml(), xml);
    }

    #[test]
    fn stray_text_rejected() {
        let xml = sample().to_xml().replace("<prmSec>", "<prmSec>junk");
        assert!(matches!(DocumentManifest::from_xml(&xml), Err(ManifestError::ParseError { .. })));
    }

    #[test]
    fn minimal_manifest_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (mut store, broken) = ManifestStore::open(dir.path()).unwrap();
        assert!(broken.is_empty());
        let m = DocumentManifest::new(id(2), "raw/a.txt");
        let path = store.write_manifest(m.clone()).unwrap();
        assert!(path.is_file());
        assert_eq!(store.read_manifest(&id(2)).unwrap(), m);
        let (reopened, _) = ManifestStore::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&id(2)), Some(&m));
    }

    #[test]
    fn schema_violations() {
        let mut m = DocumentManifest::new(id(3), "raw/a.txt");
        m.ref_section.clear();
        assert!(matches!(m.validate(), Err(ManifestError::SchemaViolation(_))));

        let mut m = DocumentManifest::new(id(3), "raw/a.txt");
        m.atomic_section.insert(AtomicElement::Identifier, "D-1-1".into());
        assert!(matches!(m.validate(), Err(ManifestError::SchemaViolation(_))));

        let mut m = DocumentManifest::new(id(3), "raw/a.txt");
        m.prm_section.push(PhysicalLink { name: "language".into(), value: "fr".into() });
        m.prm_section.push(PhysicalLink { name: "language".into(), value: "en".into() });
        assert!(matches!(m.validate(), Err(ManifestError::SchemaViolation(_))));

        let mut m = DocumentManifest::new(id(3), "../outside");
        assert!(m.validate().is_err());
        m.ref_section[0].xptr = "raw/ok".into();
        m.set_physical_link("language", "");
        assert!(m.validate().is_err());

        let dir = tempfile::tempdir().unwrap();
        let (mut store, _) = ManifestStore::open(dir.path()).unwrap();
        assert!(store.write_manifest(m).is_err());
        assert!(store.is_empty());
    }

    #[test]
    fn unknown_id_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = ManifestStore::open(dir.path()).unwrap();
        assert!(matches!(store.read_manifest(&id(9)), Err(ManifestError::NotFound(_))));
    }

    #[test]
    fn corrupted_byte_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let (mut store, _) = ManifestStore::open(dir.path()).unwrap();
        let path = store.write_manifest(sample()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        // turn the `/` of `</prmSec>` into a letter so the end tag never closes
        let at = bytes.windows(9).position(|w| w == b"</prmSec>").unwrap() + 1;
        bytes[at] = b'X';
        fs::write(&path, &bytes).unwrap();
        match store.read_manifest(&id(1)) {
            Err(ManifestError::ParseError { offset, .. }) => assert!(offset > 0 && offset as usize <= bytes.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
        let (_, broken) = ManifestStore::open(dir.path()).unwrap();
        assert_eq!(broken.len(), 1);
    }

    #[test]
    fn unknown_atomic_element_rejected() {
        let xml = sample().to_xml().replace("dc:title", "dc:subject");
        assert!(matches!(DocumentManifest::from_xml(&xml), Err(ManifestError::ParseError { .. })));
    }

    #[test]
    fn physical_link_queries_partition() {
        let dir = tempfile::tempdir().unwrap();
        let (mut store, _) = ManifestStore::open(dir.path()).unwrap();
        for n in 0..10 {
            let mut m = DocumentManifest::new(id(n), "raw/x");
            m.set_physical_link("language", if n % 3 == 0 { "en" } else { "fr" });
            if n % 2 == 0 {
                m.set_physical_link("company", format!("c{}", n % 4));
            }
            store.write_manifest(m).unwrap();
        }
        let en = store.query_by_physical_link("language", "en");
        let brute: BTreeSet<_> = store
            .manifests()
            .filter(|m| m.physical_link("language") == Some("en"))
            .map(|m| m.doc_id.clone())
            .collect();
        assert_eq!(en, brute);
        assert!(store.query_by_physical_link("language", "de").is_empty());
        assert!(store.query_by_physical_link("nope", "x").is_empty());

        let clusters = store.clusters("company");
        let mut union = BTreeSet::new();
        let mut total = 0;
        for ids in clusters.values() {
            total += ids.len();
            union.extend(ids.iter().cloned());
        }
        assert_eq!(total, union.len(), "clusters are disjoint");
        assert_eq!(union.len(), 5);

        // rewriting a manifest moves it between clusters
        let mut m = store.get(&id(0)).unwrap().clone();
        m.set_physical_link("language", "fr");
        store.write_manifest(m).unwrap();
        assert!(!store.query_by_physical_link("language", "en").contains(&id(0)));
        assert!(store.query_by_physical_link("language", "fr").contains(&id(0)));
    }

    #[test]
    fn global_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = ManifestStore::open(dir.path()).unwrap();
        assert!(matches!(store.read_global_manifest(), Err(ManifestError::NotFound(_))));
        let g = GlobalManifest {
            entries: vec![
                GlobalEntry { name: "stopwords-fr".into(), location: "global/stopwords-fr.txt".into(), kind: ResourceType::Stopwords },
                GlobalEntry { name: "stopwords-en".into(), location: "global/stopwords-en.txt".into(), kind: ResourceType::Stopwords },
                GlobalEntry { name: "dict-marketing".into(), location: "global/dict.txt".into(), kind: ResourceType::Dictionary },
                GlobalEntry { name: "thesaurus-fr".into(), location: "global/th.txt".into(), kind: ResourceType::Thesaurus },
            ],
        };
        store.write_global_manifest(&g).unwrap();
        assert_eq!(store.read_global_manifest().unwrap(), g);

        store.write_global_manifest(&GlobalManifest::default()).unwrap();
        assert!(store.read_global_manifest().unwrap().entries.is_empty());

        let mut dup = g.clone();
        dup.entries[1].name = "stopwords-fr".into();
        assert!(matches!(store.write_global_manifest(&dup), Err(ManifestError::SchemaViolation(_))));
    }

    #[test]
    fn resource_resolution() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("global")).unwrap();
        fs::write(dir.path().join("global/sw.txt"), "le\nla\nde").unwrap();
        fs::write(dir.path().join("global/th.txt"), "client,consommateur,acheteur\n").unwrap();
        let g = GlobalManifest {
            entries: vec![
                GlobalEntry { name: "sw".into(), location: "global/sw.txt".into(), kind: ResourceType::Stopwords },
                GlobalEntry { name: "th".into(), location: "global/th.txt".into(), kind: ResourceType::Thesaurus },
                GlobalEntry { name: "gone".into(), location: "global/missing.txt".into(), kind: ResourceType::Dictionary },
            ],
        };
        match resolve_resource(dir.path(), &g, "sw").unwrap() {
            Resource::Words(w) => assert_eq!(w.len(), 3),
            other => panic!("{other:?}"),
        }
        match resolve_resource(dir.path(), &g, "th").unwrap() {
            Resource::Thesaurus(t) => {
                assert_eq!(t.groups.len(), 1);
                assert_eq!(t.groups[0].len(), 3);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(resolve_resource(dir.path(), &g, "nope"), Err(ManifestError::NotRegistered(_))));
        assert!(matches!(resolve_resource(dir.path(), &g, "gone"), Err(ManifestError::UnreadableResource { .. })));
    }

    #[test]
    fn dangling_reference_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let (mut store, _) = ManifestStore::open(dir.path()).unwrap();
        fs::create_dir_all(dir.path().join("raw")).unwrap();
        fs::write(dir.path().join("raw/a.txt"), "x").unwrap();
        store.write_manifest(DocumentManifest::new(id(1), "raw/a.txt")).unwrap();
        assert!(store.dangling_references().is_empty());
        store.write_manifest(DocumentManifest::new(id(2), "raw/b.txt")).unwrap();
        assert_eq!(store.dangling_references(), vec![(id(2), "raw/b.txt".to_string())]);
    }
}
