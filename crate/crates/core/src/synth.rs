//! Deterministic synthetic ponds for tests, demos and benchmarks.
//!
//! Documents are laid out as `<company>/<category>/<file>` with a binary
//! (pdf or docx) and its `.txt` sidecar. Texts mix language-specific
//! stopwords with marketing vocabulary, including thesaurus synonyms.

use std::fs;
use std::io::{self, Cursor, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{sidecar_path, MIME_DOCX, MIME_PDF};

pub const DEFAULT_SEED: u64 = 0x7e47_90d5;
pub const DEFAULT_DOCUMENTS: usize = 101;

pub const COMPANIES: [&str; 12] = [
    "acme", "borealis", "cobalt", "dune", "ember", "fjord", "granite", "helios", "iris", "juniper",
    "kestrel", "lumen",
];
pub const CATEGORIES: [&str; 3] = ["interview", "annual_report", "press_article"];

const STOP_FR: &[&str] = &[
    "le", "la", "les", "de", "des", "du", "et", "est", "une", "un", "dans", "pour", "avec", "sur",
    "nous", "notre", "qui", "que", "sont", "très",
];
const STOP_EN: &[&str] = &[
    "the", "and", "of", "to", "is", "with", "for", "our", "we", "this", "that", "are", "was", "by",
    "from", "their", "which", "very",
];
const WORDS_FR: &[&str] = &[
    "client", "consommateur", "acheteur", "marque", "enseigne", "fidélité", "fidélisation", "vente",
    "commerce", "prix", "tarif", "marché", "produit", "qualité", "stratégie", "campagne", "offre",
    "valeur", "croissance", "résultat", "innovation", "magasin", "réseau", "équipe", "année",
    "chiffre", "affaires", "développement", "numérique", "service",
];
const WORDS_EN: &[&str] = &[
    "customer", "consumer", "buyer", "client", "brand", "label", "loyalty", "retention", "sales",
    "revenue", "price", "pricing", "market", "product", "quality", "strategy", "campaign", "offer",
    "value", "growth", "result", "innovation", "store", "network", "team", "year", "turnover",
    "development", "digital", "service",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureDocument {
    /// Relative to the pond root.
    pub path: PathBuf,
    pub company: String,
    pub category: String,
    pub language: &'static str,
    pub mime: &'static str,
    pub text: String,
    /// Seconds since the epoch; written as the file modification time.
    pub modified: i64,
}

/// ZIP archive with a stored `word/document.xml` holding `body` as one paragraph.
pub fn minimal_docx(body: &str) -> Vec<u8> {
    let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Stored)
        .last_modified_time(zip::DateTime::default());
    let content_types = concat!(
        r#"<?xml version="1.0" encoding="UTF-8"?>"#,
        r#"<Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types">"#,
        r#"<Override PartName="/word/document.xml" ContentType="application/vnd.openxmlformats-officedocument.wordprocessingml.document.main+xml"/>"#,
        "</Types>"
    );
    let document = format!(
        r#"<?xml version="1.0" encoding="UTF-8"?><w:document xmlns:w="http://schemas.openxmlformats.org/wordprocessingml/2006/main"><w:body><w:p><w:r><w:t>{}</w:t></w:r></w:p></w:body></w:document>"#,
        quick_xml::escape::escape(body)
    );
    let write = |zip: &mut zip::ZipWriter<Cursor<Vec<u8>>>, name: &str, data: &str| -> zip::result::ZipResult<()> {
        zip.start_file(name, opts)?;
        zip.write_all(data.as_bytes())?;
        Ok(())
    };
    write(&mut zip, "[Content_Types].xml", content_types).expect("in-memory zip");
    write(&mut zip, "word/document.xml", &document).expect("in-memory zip");
    zip.finish().expect("in-memory zip").into_inner()
}

pub fn minimal_pdf(body: &str) -> Vec<u8> {
    format!(
        "%PDF-1.4\n%\u{e2}\u{e3}\n1 0 obj << /Length {} >> stream\n{}\nendstream endobj\n%%EOF\n",
        body.len(),
        body.lines().next().unwrap_or_default()
    )
    .into_bytes()
}

fn sentence(rng: &mut ChaCha8Rng, stop: &[&str], words: &[&str]) -> String {
    let len = rng.gen_range(5..16);
    let mut out: Vec<String> = (0..len)
        .map(|_| {
            let pool = if rng.gen_bool(0.45) { stop } else { words };
            pool.choose(rng).expect("non-empty pool").to_string()
        })
        .collect();
    if let Some(first) = out.first_mut() {
        let mut cs = first.chars();
        if let Some(c) = cs.next() {
            *first = c.to_uppercase().chain(cs).collect();
        }
    }
    if rng.gen_bool(0.2) {
        let at = rng.gen_range(1..out.len());
        out.insert(at, rng.gen_range(2009..2019).to_string());
    }
    let mut s = out.join(" ");
    s.push_str([".", ".", ".", "!", "?", ";"].choose(rng).expect("non-empty"));
    s
}

fn document_text(rng: &mut ChaCha8Rng, language: &str, company: &str, category: &str) -> String {
    let (stop, words) = if language == "fr" { (STOP_FR, WORDS_FR) } else { (STOP_EN, WORDS_EN) };
    let mut text = format!("{} - {}\n\n", company.to_uppercase(), category.replace('_', " "));
    // skewed lengths: most documents are short, a few are long
    let sentences = 3 + (rng.gen_range(0.0f64..1.0).powi(3) * 60.0) as usize;
    for i in 0..sentences {
        text.push_str(&sentence(rng, stop, words));
        text.push(if i % 5 == 4 { '\n' } else { ' ' });
    }
    text.push('\n');
    text
}

fn modified_at(rng: &mut ChaCha8Rng) -> i64 {
    let year = rng.gen_range(2010..2019);
    let day = rng.gen_range(0..365);
    NaiveDate::from_ymd_opt(year, 1, 1)
        .expect("valid date")
        .and_hms_opt(9, 30, 0)
        .expect("valid time")
        .and_utc()
        .timestamp()
        + day * 86_400
}

/// `n` documents spread over every company and category, both MIME types
/// and both languages (given `n >= 36`).
pub fn generate(seed: u64, n: usize) -> Vec<FixtureDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let company = COMPANIES[i % COMPANIES.len()];
            let category = CATEGORIES[(i / COMPANIES.len()) % CATEGORIES.len()];
            let language = match i {
                0 => "fr",
                1 => "en",
                _ if rng.gen_bool(0.5) => "fr",
                _ => "en",
            };
            let mime = match i {
                0 => MIME_PDF,
                1 => MIME_DOCX,
                _ if rng.gen_bool(0.5) => MIME_PDF,
                _ => MIME_DOCX,
            };
            let ext = if mime == MIME_PDF { "pdf" } else { "docx" };
            let text = document_text(&mut rng, language, company, category);
            FixtureDocument {
                path: PathBuf::from(company).join(category).join(format!("doc-{i:03}.{ext}")),
                company: company.to_string(),
                category: category.to_string(),
                language,
                mime,
                text,
                modified: modified_at(&mut rng),
            }
        })
        .collect()
}

pub fn default_corpus() -> Vec<FixtureDocument> {
    generate(DEFAULT_SEED, DEFAULT_DOCUMENTS)
}

/// Writes binaries and sidecars under `root` and sets their modification
/// times.
pub fn write_pond(root: &Path, docs: &[FixtureDocument]) -> io::Result<()> {
    for d in docs {
        let path = root.join(&d.path);
        fs::create_dir_all(path.parent().expect("nested path"))?;
        let bytes = if d.mime == MIME_PDF {
            minimal_pdf(&d.text)
        } else {
            minimal_docx(&d.text)
        };
        let mtime = UNIX_EPOCH + Duration::from_secs(d.modified.max(0) as u64);
        for (p, contents) in [(path.clone(), bytes), (sidecar_path(&path), d.text.clone().into_bytes())] {
            fs::write(&p, contents)?;
            fs::File::options().write(true).open(&p)?.set_modified(mtime)?;
        }
    }
    Ok(())
}

/// Modification time as a `SystemTime`.
pub fn system_time(secs: i64) -> SystemTime {
    UNIX_EPOCH + Duration::from_secs(secs.max(0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{detect_language, detect_mime, LanguageProfile};
    use crate::resources::{parse_word_list, STOPWORDS_EN, STOPWORDS_FR};
    use std::collections::BTreeSet;

    #[test]
    fn corpus_shape() {
        let docs = default_corpus();
        assert_eq!(docs.len(), 101);
        let count = |f: &dyn Fn(&FixtureDocument) -> String| docs.iter().map(f).collect::<BTreeSet<_>>().len();
        assert_eq!(count(&|d| d.company.clone()), 12);
        assert_eq!(count(&|d| d.category.clone()), 3);
        assert_eq!(count(&|d| d.language.to_string()), 2);
        assert_eq!(count(&|d| d.mime.to_string()), 2);
        assert_eq!(generate(DEFAULT_SEED, 101), docs);
    }

    #[test]
    fn binaries_sniff_correctly() {
        assert_eq!(detect_mime(&minimal_docx("a < b & c")), MIME_DOCX);
        assert_eq!(detect_mime(&minimal_pdf("x")), MIME_PDF);
        assert_eq!(minimal_docx("same"), minimal_docx("same"));
    }

    #[test]
    fn generated_languages_are_detectable() {
        let profiles = [
            LanguageProfile {
                code: "fr".into(),
                stopwords: parse_word_list(STOPWORDS_FR),
            },
            LanguageProfile {
                code: "en".into(),
                stopwords: parse_word_list(STOPWORDS_EN),
            },
        ];
        for d in default_corpus() {
            assert_eq!(detect_language(&d.text, &profiles), d.language, "{}", d.path.display());
        }
    }

    #[test]
    fn pond_written_with_mtimes() {
        let dir = tempfile::tempdir().unwrap();
        let docs = generate(3, 4);
        write_pond(dir.path(), &docs).unwrap();
        for d in &docs {
            let p = dir.path().join(&d.path);
            assert_eq!(fs::metadata(&p).unwrap().modified().unwrap(), system_time(d.modified));
            assert_eq!(fs::read_to_string(sidecar_path(&p)).unwrap(), d.text);
        }
    }
}
