//! Invariants of the text pipeline, index, id source and slice-and-dice
//! filtering, checked on generated inputs.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

use proptest::prelude::*;
use textpond_core::analytics::AnalysisQuery;
use textpond_core::index::PostingsIndex;
use textpond_core::ingest::IdGenerator;
use textpond_core::synth;
use textpond_core::textproc::{
    build_document_frequency, present, render, term_frequencies, tfidf, tokenize, transform, Label,
    Payload, PresentationKind, Resource, Resources, TransformationKind, TransformationOp,
};
use textpond_core::DocumentId;

use common::{oracle_tokens, Pond};

const VOCAB: &[&str] = &[
    "le", "la", "the", "and", "client", "clients", "brand", "marque", "Vente", "ventes", "qualité",
    "growth", "growing", "2017", "x",
];

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::sample::select(VOCAB), prop::sample::select(&[" ", ", ", ". ", "\n", "-"][..])), 0..40)
        .prop_map(|ws| ws.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
}

fn resources() -> Resources {
    let words = |ws: &[&str]| Resource::Words(ws.iter().map(|w| w.to_string()).collect::<HashSet<_>>());
    Resources {
        by_name: HashMap::from([
            ("stop".to_string(), words(&["le", "la", "the", "and"])),
            ("dict".to_string(), words(&["client", "brand", "marque", "qualité", "growth"])),
        ]),
    }
}

fn op(kind: TransformationKind) -> TransformationOp {
    let resource = match kind {
        TransformationKind::StopwordRemoval => Some("stop".to_string()),
        TransformationKind::DictionaryFilter => Some("dict".to_string()),
        _ => None,
    };
    TransformationOp::new(kind, resource).unwrap()
}

fn filtering_kind() -> impl Strategy<Value = TransformationKind> {
    prop::sample::select(vec![TransformationKind::StopwordRemoval, TransformationKind::DictionaryFilter])
}

fn any_kind() -> impl Strategy<Value = TransformationKind> {
    prop::sample::select(vec![
        TransformationKind::OriginalVersion,
        TransformationKind::StopwordRemoval,
        TransformationKind::LemmatizedVersion,
        TransformationKind::DictionaryFilter,
    ])
}

proptest! {
    #[test]
    fn tokens_match_alphanumeric_runs(t in text()) {
        let norm: Vec<String> = tokenize(&t).into_iter().map(|tok| tok.normalized).collect();
        prop_assert_eq!(norm, oracle_tokens(&t));
    }

    #[test]
    fn filtering_is_idempotent_and_shrinks(t in text(), kind in filtering_kind()) {
        let res = resources();
        let tokens = tokenize(&t);
        let once = transform(&tokens, &op(kind), &res, "fr").unwrap();
        let twice = transform(&once, &op(kind), &res, "fr").unwrap();
        prop_assert!(once.len() <= tokens.len());
        prop_assert!(once.iter().all(|tok| tokens.contains(tok)));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn lemmatizing_keeps_positions(t in text(), lang in prop::sample::select(vec!["fr", "en", "xx"])) {
        let tokens = tokenize(&t);
        let lem = transform(&tokens, &op(TransformationKind::LemmatizedVersion), &resources(), lang).unwrap();
        prop_assert_eq!(lem.len(), tokens.len());
        for (a, b) in tokens.iter().zip(&lem) {
            prop_assert_eq!(a.position, b.position);
            prop_assert_eq!(a.char_span, b.char_span);
            prop_assert!(!b.normalized.is_empty());
        }
    }

    #[test]
    fn bag_and_frequencies_agree(t in text(), kind in any_kind()) {
        let tokens = transform(&tokenize(&t), &op(kind), &resources(), "en").unwrap();
        let Payload::Bag(bag) = present(&tokens, PresentationKind::BagOfWords, None).unwrap() else {
            panic!("bag payload expected");
        };
        let Payload::Frequencies(tf) = present(&tokens, PresentationKind::TermFrequencyVector, None).unwrap() else {
            panic!("frequency payload expected");
        };
        prop_assert_eq!(bag.keys().collect::<Vec<_>>(), tf.entries().keys().collect::<Vec<_>>());
        prop_assert_eq!(bag.values().sum::<u64>() as usize, tokens.len());
        prop_assert_eq!(tf.mass(), tokens.len() as f64);
    }

    #[test]
    fn tfidf_prunes_exactly_the_ubiquitous_terms(corpus in prop::collection::vec(text(), 1..6)) {
        let tfs: Vec<_> = corpus.iter().map(|t| term_frequencies(&tokenize(t))).collect();
        let stats = build_document_frequency(&tfs);
        let n = corpus.len();
        for tf in &tfs {
            let w = tfidf(tf, &stats).unwrap();
            for (term, count) in tf.entries() {
                let df = tfs.iter().filter(|v| v.get(term) > 0.0).count();
                let expected = count * (n as f64 / df as f64).ln();
                prop_assert_eq!(w.get(term) == 0.0, df == n, "{}", term);
                prop_assert!((w.get(term) - expected).abs() <= 1e-12 * expected.max(1.0));
            }
            prop_assert!(w.entries().keys().all(|k| tf.get(k) > 0.0));
        }
    }

    #[test]
    fn rendering_is_deterministic(t in text(), kind in any_kind()) {
        let res = resources();
        let tfs = [term_frequencies(&tokenize(&t))];
        let stats = build_document_frequency(&tfs);
        for label in Label::all().filter(|l| l.transformation == kind) {
            let a = render(&t, &op(kind), label.presentation, &res, "fr", Some(&stats)).unwrap();
            let b = render(&t, &op(kind), label.presentation, &res, "fr", Some(&stats)).unwrap();
            prop_assert_eq!(a, b);
        }
        let neutral = render(&t, &op(TransformationKind::OriginalVersion), PresentationKind::ClassicPresentation, &res, "fr", None).unwrap();
        prop_assert_eq!(neutral, Payload::Text(t.clone()));
    }

    #[test]
    fn index_search_equals_brute_force(
        docs in prop::collection::vec(text(), 1..8),
        groups in prop::collection::vec(prop::collection::btree_set(prop::sample::select(VOCAB).prop_map(str::to_lowercase), 1..3), 0..4),
        all_terms in any::<bool>(),
    ) {
        let label: Label = "original+classic".parse().unwrap();
        let mut index = PostingsIndex::new(label);
        let ids: Vec<DocumentId> = (0..docs.len() as u64).map(|i| DocumentId::new(1, i)).collect();
        for (id, t) in ids.iter().zip(&docs) {
            index.index_text(id, t);
        }
        let expected: BTreeSet<DocumentId> = ids
            .iter()
            .zip(&docs)
            .filter(|(_, t)| {
                let words: BTreeSet<String> = oracle_tokens(t).into_iter().collect();
                let hit = |g: &BTreeSet<String>| g.iter().any(|w| words.contains(w));
                groups.is_empty() || if all_terms { groups.iter().all(hit) } else { groups.iter().any(hit) }
            })
            .map(|(id, _)| id.clone())
            .collect();
        prop_assert_eq!(index.search(&groups, all_terms), expected);
    }

    #[test]
    fn ids_are_distinct_and_ordered(clock in prop::collection::vec(0u128..50, 1..200)) {
        let generator = IdGenerator::new();
        let ids: Vec<DocumentId> = clock.iter().map(|&t| generator.next_at(t)).collect();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        let parsed: Vec<DocumentId> = ids.iter().map(|i| i.to_string().parse().unwrap()).collect();
        prop_assert_eq!(parsed, ids);
    }
}

fn shared_pond() -> &'static Pond {
    static POND: OnceLock<Pond> = OnceLock::new();
    POND.get_or_init(|| common::ingest(synth::generate(11, 48)))
}

fn facet_query(facets: &[(&str, &[&str])], keywords: &[&str]) -> AnalysisQuery {
    AnalysisQuery {
        facet_filters: facets
            .iter()
            .map(|(k, vs)| (k.to_string(), vs.iter().map(|v| v.to_string()).collect()))
            .collect::<BTreeMap<_, BTreeSet<_>>>(),
        keyword_terms: keywords.iter().map(|k| k.to_string()).collect(),
        ..AnalysisQuery::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Two queries over disjoint facets: their conjunction selects the
    /// intersection of their selections.
    #[test]
    fn conjunction_is_intersection(
        companies in prop::collection::btree_set(prop::sample::select(&synth::COMPANIES[..]), 0..4),
        categories in prop::collection::btree_set(prop::sample::select(&synth::CATEGORIES[..]), 0..3),
        languages in prop::collection::btree_set(prop::sample::select(vec!["fr", "en"]), 0..2),
        keyword in prop::option::of(prop::sample::select(vec!["client", "brand", "marque", "growth"])),
    ) {
        let snap = shared_pond().engine.snapshot();
        let companies: Vec<&str> = companies.into_iter().collect();
        let categories: Vec<&str> = categories.into_iter().collect();
        let languages: Vec<&str> = languages.into_iter().collect();
        let keywords: Vec<&str> = keyword.into_iter().collect();

        let q1 = facet_query(&[("company", &companies), ("category", &categories)], &[]);
        let q2 = facet_query(&[("language", &languages)], &keywords);
        let both = facet_query(
            &[("company", &companies), ("category", &categories), ("language", &languages)],
            &keywords,
        );
        let (a, b) = (snap.filter(&q1).unwrap(), snap.filter(&q2).unwrap());
        prop_assert_eq!(snap.filter(&both).unwrap(), &a & &b);

        // facet filters agree with the fixture metadata
        let by_id = &shared_pond().by_id;
        let expected: BTreeSet<DocumentId> = by_id
            .iter()
            .filter(|(_, d)| companies.is_empty() || companies.contains(&d.company.as_str()))
            .filter(|(_, d)| categories.is_empty() || categories.contains(&d.category.as_str()))
            .map(|(id, _)| id.clone())
            .collect();
        prop_assert_eq!(a, expected);
    }
}

#[test]
fn satellite_transformation_extends_without_touching_existing_labels() {
    // A new resource-backed filter is just another word list: existing
    // renders stay identical.
    let mut res = resources();
    let t = "Le client et la marque, growth 2017.";
    let stats = build_document_frequency(&[term_frequencies(&tokenize(t))]);
    let renders = |res: &Resources| -> Vec<Payload> {
        Label::all()
            .filter(|l| l.transformation == TransformationKind::StopwordRemoval)
            .map(|l| render(t, &op(l.transformation), l.presentation, res, "fr", Some(&stats)).unwrap())
            .collect()
    };
    let before = renders(&res);
    res.by_name.insert("extra".into(), Resource::Words(HashSet::from(["growth".to_string()])));
    let after = renders(&res);
    assert_eq!(before, after);
    let extra = TransformationOp::new(TransformationKind::DictionaryFilter, Some("extra".into())).unwrap();
    let kept = transform(&tokenize(t), &extra, &res, "fr").unwrap();
    assert_eq!(kept.iter().map(|k| k.normalized.as_str()).collect::<Vec<_>>(), ["growth"]);
}
