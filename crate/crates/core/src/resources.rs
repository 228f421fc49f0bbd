//! Global semantic resources: word lists and thesauri, plus the default set
//! installed into a fresh store.

use std::collections::{BTreeSet, HashSet};

pub const STOPWORDS_FR: &str = include_str!("../resources/stopwords-fr.txt");
pub const STOPWORDS_EN: &str = include_str!("../resources/stopwords-en.txt");
pub const DICT_MARKETING: &str = include_str!("../resources/dict-marketing.txt");
pub const THESAURUS_FR: &str = include_str!("../resources/thesaurus-fr.txt");
pub const THESAURUS_EN: &str = include_str!("../resources/thesaurus-en.txt");

/// `(name, file name, kind, contents)` for the resources a new store starts with.
pub const DEFAULTS: &[(&str, &str, &str, &str)] = &[
    ("stopwords-fr", "stopwords-fr.txt", "stopwords", STOPWORDS_FR),
    ("stopwords-en", "stopwords-en.txt", "stopwords", STOPWORDS_EN),
    ("dict-marketing", "dict-marketing.txt", "dictionary", DICT_MARKETING),
    ("thesaurus-fr", "thesaurus-fr.txt", "thesaurus", THESAURUS_FR),
    ("thesaurus-en", "thesaurus-en.txt", "thesaurus", THESAURUS_EN),
];

/// One term per line, trimmed and lowercased; blank lines ignored.
pub fn parse_word_list(contents: &str) -> HashSet<String> {
    contents
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Synonym groups, one comma-separated group per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Thesaurus {
    pub groups: Vec<BTreeSet<String>>,
}

impl Thesaurus {
    pub fn parse(contents: &str) -> Self {
        let groups = contents
            .lines()
            .map(|line| {
                line.split(',')
                    .map(|t| t.trim().to_lowercase())
                    .filter(|t| !t.is_empty())
                    .collect::<BTreeSet<_>>()
            })
            .filter(|g| !g.is_empty())
            .collect();
        Self { groups }
    }

    /// The term itself plus every member of every group containing it.
    pub fn expand(&self, term: &str) -> BTreeSet<String> {
        let term = term.to_lowercase();
        let mut out = BTreeSet::from([term.clone()]);
        for group in self.groups.iter().filter(|g| g.contains(&term)) {
            out.extend(group.iter().cloned());
        }
        out
    }

    pub fn expand_all<'a>(&self, terms: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
        terms.into_iter().flat_map(|t| self.expand(t)).collect()
    }
}
