//! Document intake: identifier assignment, file properties, and the MIME /
//! language / directory-layout detectors that seed physical links.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::tokenize;

pub const MIME_PDF: &str = "application/pdf";
pub const MIME_DOCX: &str = "application/vnd.openxmlformats-officedocument.wordprocessingml.document";
pub const MIME_TEXT: &str = "text/plain";
pub const MIME_OCTET: &str = "application/octet-stream";

/// Language code returned when no profile covers enough of the text.
pub const UNDETERMINED: &str = "und";

const MIN_LANGUAGE_TOKENS: usize = 5;
const MIN_LANGUAGE_COVERAGE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable path {path:?}: {reason}")]
    UnreadablePath { path: PathBuf, reason: String },
    #[error("{path:?} is not laid out as <company>/<category>/<file> under the pond root")]
    MalformedLayout { path: PathBuf },
    #[error("{path:?} is {mime} and needs a pre-extracted `.txt` sidecar")]
    MissingSidecar { path: PathBuf, mime: String },
    #[error("{path:?} has no extractable text ({mime})")]
    NoText { path: PathBuf, mime: String },
    #[error("sidecar text for {path:?} is not valid UTF-8")]
    SidecarEncoding { path: PathBuf },
    #[error("empty document {path:?}")]
    Empty { path: PathBuf },
}

/// Identifier of a document version in the pond: `D-<epoch-nanos>-<counter>`.
///
/// Ordering is numeric on `(nanos, counter)`, which is assignment order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DocumentId {
    nanos: u128,
    counter: u64,
}

impl DocumentId {
    pub fn new(nanos: u128, counter: u64) -> Self {
        Self { nanos, counter }
    }

    pub fn nanos(&self) -> u128 {
        self.nanos
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }
}

impl fmt::Display for DocumentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D-{}-{}", self.nanos, self.counter)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed document id {0:?}")]
pub struct BadDocumentId(pub String);

impl FromStr for DocumentId {
    type Err = BadDocumentId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadDocumentId(s.to_string());
        let rest = s.strip_prefix("D-").ok_or_else(bad)?;
        let (nanos, counter) = rest.split_once('-').ok_or_else(bad)?;
        let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !digits(nanos) || !digits(counter) {
            return Err(bad());
        }
        Ok(Self {
            nanos: nanos.parse().map_err(|_| bad())?,
            counter: counter.parse().map_err(|_| bad())?,
        })
    }
}

impl TryFrom<String> for DocumentId {
    type Error = BadDocumentId;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DocumentId> for String {
    fn from(id: DocumentId) -> Self {
        id.to_string()
    }
}

impl Ord for DocumentId {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.nanos, self.counter).cmp(&(other.nanos, other.counter))
    }
}

impl PartialOrd for DocumentId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Formats an id from an explicit clock reading and counter value.
pub fn assign_id(now_nanos: u128, counter: u64) -> DocumentId {
    DocumentId::new(now_nanos, counter)
}

/// Process-wide id source. The clock reading is clamped so it never runs
/// backwards, and the counter is incremented under the same lock.
#[derive(Debug, Default)]
pub struct IdGenerator {
    state: Mutex<(u128, u64)>,
}

impl IdGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_at(&self, now_nanos: u128) -> DocumentId {
        let mut state = self.state.lock().expect("id generator poisoned");
        let nanos = now_nanos.max(state.0);
        let counter = state.1;
        *state = (nanos, counter + 1);
        assign_id(nanos, counter)
    }

    pub fn next(&self) -> DocumentId {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        self.next_at(now)
    }
}

#[derive(Debug, Clone)]
pub struct RawDocument {
    pub source_path: PathBuf,
    pub bytes: Vec<u8>,
    pub sidecar_text: Option<String>,
}

impl RawDocument {
    /// Reads a file and, if present, its `<file>.txt` sidecar.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        if path.as_os_str().is_empty() {
            return Err(IngestError::UnreadablePath {
                path: path.to_path_buf(),
                reason: "empty path".into(),
            });
        }
        let bytes = fs::read(path).map_err(|e| IngestError::UnreadablePath {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if bytes.is_empty() {
            return Err(IngestError::Empty {
                path: path.to_path_buf(),
            });
        }
        let sidecar = sidecar_path(path);
        let sidecar_text = match fs::read(&sidecar) {
            Ok(raw) => Some(
                String::from_utf8(raw)
                    .map_err(|_| IngestError::SidecarEncoding { path: sidecar })?,
            ),
            Err(_) => None,
        };
        Ok(Self {
            source_path: path.to_path_buf(),
            bytes,
            sidecar_text,
        })
    }

    /// The plain text the rest of the pipeline works on.
    pub fn text(&self) -> Result<String, IngestError> {
        match detect_mime(&self.bytes) {
            MIME_TEXT => Ok(String::from_utf8(self.bytes.clone()).expect("sniffed as UTF-8")),
            mime @ (MIME_PDF | MIME_DOCX) => {
                self.sidecar_text
                    .clone()
                    .ok_or_else(|| IngestError::MissingSidecar {
                        path: self.source_path.clone(),
                        mime: mime.to_string(),
                    })
            }
            mime => self.sidecar_text.clone().ok_or_else(|| IngestError::NoText {
                path: self.source_path.clone(),
                mime: mime.to_string(),
            }),
        }
    }
}

/// `report.pdf` -> `report.pdf.txt`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".txt");
    PathBuf::from(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentProperties {
    pub title: String,
    pub creator: String,
    /// Owner-name fallback is flagged low.
    pub creator_confidence: Confidence,
    pub created_at: i64,
    pub modified_at: i64,
    pub size_bytes: u64,
}

pub fn extract_properties(doc: &RawDocument) -> Result<DocumentProperties, IngestError> {
    let path = &doc.source_path;
    let unreadable = |reason: String| IngestError::UnreadablePath {
        path: path.clone(),
        reason,
    };
    if path.as_os_str().is_empty() {
        return Err(unreadable("empty path".into()));
    }
    let meta = fs::metadata(path).map_err(|e| unreadable(e.to_string()))?;
    let modified = meta.modified().map(epoch_seconds).unwrap_or(0);
    // Birth time is reset by copies, so a file can look created after it was
    // last modified; the earlier of the two is used.
    let created = meta
        .created()
        .map(epoch_seconds)
        .map(|c| c.min(modified))
        .unwrap_or(modified);
    let title = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(DocumentProperties {
        title,
        creator: owner_name(&meta),
        creator_confidence: Confidence::Low,
        created_at: created,
        modified_at: modified,
        size_bytes: doc.bytes.len() as u64,
    })
}

fn epoch_seconds(t: SystemTime) -> i64 {
    match t.duration_since(UNIX_EPOCH) {
        Ok(d) => d.as_secs() as i64,
        Err(e) => -(e.duration().as_secs() as i64),
    }
}

#[cfg(unix)]
fn owner_name(meta: &fs::Metadata) -> String {
    use std::os::unix::fs::MetadataExt;
    let uid = meta.uid();
    fs::read_to_string("/etc/passwd")
        .ok()
        .and_then(|passwd| {
            passwd.lines().find_map(|line| {
                let mut fields = line.split(':');
                let name = fields.next()?;
                let id = fields.nth(1)?;
                (id.parse::<u32>().ok()? == uid).then(|| name.to_string())
            })
        })
        .unwrap_or_else(|| format!("uid:{uid}"))
}

#[cfg(not(unix))]
fn owner_name(_meta: &fs::Metadata) -> String {
    "unknown".to_string()
}

pub fn detect_mime(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"%PDF") {
        return MIME_PDF;
    }
    if bytes.starts_with(b"PK\x03\x04") {
        return if zip_has_entry_prefix(bytes, b"word/") {
            MIME_DOCX
        } else {
            MIME_OCTET
        };
    }
    if !bytes.contains(&0) && std::str::from_utf8(bytes).is_ok() {
        return MIME_TEXT;
    }
    MIME_OCTET
}

/// Looks for an entry name starting with `prefix` in any local or central
/// directory header.
fn zip_has_entry_prefix(bytes: &[u8], prefix: &[u8]) -> bool {
    let u16_at = |i: usize| bytes.get(i..i + 2).map(|b| u16::from_le_bytes([b[0], b[1]]) as usize);
    let name_at = |start: usize, len: usize| bytes.get(start..start + len);
    let mut i = 0;
    while i + 4 <= bytes.len() {
        let sig = &bytes[i..i + 4];
        let name = if sig == b"PK\x03\x04" {
            u16_at(i + 26).and_then(|len| name_at(i + 30, len))
        } else if sig == b"PK\x01\x02" {
            u16_at(i + 28).and_then(|len| name_at(i + 46, len))
        } else {
            None
        };
        if name.is_some_and(|n| n.starts_with(prefix)) {
            return true;
        }
        i += 1;
    }
    false
}

/// A language with its stopword list; profile order is tie-break priority.
#[derive(Debug, Clone)]
pub struct LanguageProfile {
    pub code: String,
    pub stopwords: HashSet<String>,
}

pub fn detect_language(text: &str, profiles: &[LanguageProfile]) -> String {
    let tokens = tokenize(text);
    if tokens.len() < MIN_LANGUAGE_TOKENS || profiles.is_empty() {
        return UNDETERMINED.to_string();
    }
    let mut best: Option<(&str, usize)> = None;
    for profile in profiles {
        let hits = tokens
            .iter()
            .filter(|t| profile.stopwords.contains(&t.normalized))
            .count();
        if best.is_none_or(|(_, b)| hits > b) {
            best = Some((&profile.code, hits));
        }
    }
    match best {
        Some((code, hits)) if hits as f64 / tokens.len() as f64 >= MIN_LANGUAGE_COVERAGE => {
            code.to_string()
        }
        _ => UNDETERMINED.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedFacets {
    pub mime_type: String,
    pub language: String,
    pub company: String,
    pub business_category: String,
}

/// Splits `<company>/<category>/...` off the path relative to the pond root.
pub fn layout_facets(source_path: &Path, pond_root: &Path) -> Result<(String, String), IngestError> {
    let malformed = || IngestError::MalformedLayout {
        path: source_path.to_path_buf(),
    };
    let rel = source_path.strip_prefix(pond_root).unwrap_or(source_path);
    let parts: Vec<String> = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    if parts.len() < 3 {
        return Err(malformed());
    }
    Ok((parts[0].clone(), parts[1].clone()))
}

pub fn derive_facets(
    doc: &RawDocument,
    pond_root: &Path,
    profiles: &[LanguageProfile],
) -> Result<DetectedFacets, IngestError> {
    let (company, business_category) = layout_facets(&doc.source_path, pond_root)?;
    let mime_type = detect_mime(&doc.bytes).to_string();
    let language = match doc.text() {
        Ok(text) => detect_language(&text, profiles),
        Err(_) => UNDETERMINED.to_string(),
    };
    Ok(DetectedFacets {
        mime_type,
        language,
        company,
        business_category,
    })
}

/// Files under the pond root that are documents: sidecars of a sibling file
/// and hidden files are skipped. Sorted by path.
pub fn discover(pond_root: &Path) -> Result<Vec<PathBuf>, IngestError> {
    if !pond_root.is_dir() {
        return Err(IngestError::UnreadablePath {
            path: pond_root.to_path_buf(),
            reason: "not a directory".into(),
        });
    }
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(pond_root).sort_by_file_name() {
        let entry = entry.map_err(|e| IngestError::UnreadablePath {
            path: pond_root.to_path_buf(),
            reason: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let name = entry.file_name().to_string_lossy();
        if name.starts_with('.') {
            continue;
        }
        if let Some(primary) = name.strip_suffix(".txt") {
            if path.with_file_name(primary).is_file() {
                continue;
            }
        }
        files.push(path.to_path_buf());
    }
    Ok(files)
}
