use std::fs;

use evret_core::corpus::{ingest_corpus, validate_corpus, Corpus, CorpusError, Document, Query, Split};
use evret_core::jsonl::JsonlError;
use proptest::prelude::*;

fn doc(id: &str, text: &str) -> Document {
    Document { doc_id: id.into(), title: None, text: text.into() }
}

fn query(id: &str, gold: &str) -> Query {
    Query { query_id: id.into(), text: format!("about {gold}"), gold_doc_id: gold.into(), split: Split::Test }
}

fn arb_text() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-zA-Z]{1,8}|[,.!?]|世界|\"q\"|\\\\", 1..12).prop_map(|w| w.join(" "))
}

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (1usize..8, prop::collection::vec((arb_text(), prop::option::of(arb_text())), 8), prop::collection::vec((0usize..8, arb_text(), any::<bool>()), 0..6))
        .prop_map(|(n, texts, qs)| {
            let docs: Vec<Document> = texts
                .into_iter()
                .take(n)
                .enumerate()
                .map(|(i, (text, title))| Document { doc_id: format!("d{i}"), title, text })
                .collect();
            let queries = qs
                .into_iter()
                .enumerate()
                .map(|(i, (g, text, train))| Query {
                    query_id: format!("q{i}"),
                    text,
                    gold_doc_id: format!("d{}", g % n),
                    split: if train { Split::Train } else { Split::Test },
                })
                .collect();
            Corpus::new(docs, queries).unwrap()
        })
}

#[derive(Debug, Clone)]
enum Mutation {
    EmptyText(usize),
    EmptyQueryText(usize),
    DuplicateDoc(usize),
    Dangle(usize),
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_ingest_is_identity(corpus in arb_corpus()) {
        let dir = tempfile::tempdir().unwrap();
        let (d, q) = (dir.path().join("d.jsonl"), dir.path().join("q.jsonl"));
        corpus.write(&d, &q).unwrap();
        let back = ingest_corpus(&d, &q).unwrap();
        prop_assert_eq!(back.documents(), corpus.documents());
        prop_assert_eq!(back.queries(), corpus.queries());
        prop_assert!(validate_corpus(&back).is_empty());
    }

    #[test]
    fn validation_flags_exactly_the_mutated_records(
        corpus in arb_corpus(),
        muts in prop::collection::vec((0usize..4, 0usize..16), 0..4),
    ) {
        let mut docs = corpus.documents().to_vec();
        let mut queries = corpus.queries().to_vec();
        let muts: Vec<Mutation> = muts
            .into_iter()
            .map(|(kind, i)| match kind {
                0 => Mutation::EmptyText(i % docs.len()),
                1 if !queries.is_empty() => Mutation::EmptyQueryText(i % queries.len()),
                2 => Mutation::DuplicateDoc(i % docs.len()),
                _ if !queries.is_empty() => Mutation::Dangle(i % queries.len()),
                _ => Mutation::EmptyText(i % docs.len()),
            })
            .collect();
        for m in &muts {
            match *m {
                Mutation::EmptyText(i) => docs[i].text = " \n ".into(),
                Mutation::EmptyQueryText(i) => queries[i].text = String::new(),
                Mutation::DuplicateDoc(i) => {
                    let mut copy = docs[i].clone();
                    copy.text = "copy".into();
                    docs.push(copy);
                }
                Mutation::Dangle(i) => queries[i].gold_doc_id = "missing".into(),
            }
        }
        let violations = validate_corpus(&Corpus::from_parts(docs.clone(), queries.clone()));
        prop_assert_eq!(violations.is_empty(), muts.is_empty(), "{:?} {:?}", muts, violations);
        for m in &muts {
            let needle = match *m {
                Mutation::EmptyText(i) => format!("doc {}: empty text", docs[i].doc_id),
                Mutation::EmptyQueryText(i) => format!("query {}: empty text", queries[i].query_id),
                Mutation::DuplicateDoc(i) => format!("doc {}: duplicate doc_id", docs[i].doc_id),
                Mutation::Dangle(i) => format!("query {}: gold_doc_id missing", queries[i].query_id),
            };
            prop_assert!(violations.iter().any(|v| v.starts_with(&needle)), "{} not in {:?}", needle, violations);
        }
    }
}

#[test]
fn ingest_reports_each_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let (d, q) = (dir.path().join("d.jsonl"), dir.path().join("q.jsonl"));

    fs::write(&d, "{\"doc_id\":\"d1\",\"text\":\"a\"}\n{\"doc_id\":\"d1\",\"text\":\"b\"}\n").unwrap();
    fs::write(&q, "").unwrap();
    assert!(matches!(ingest_corpus(&d, &q), Err(CorpusError::DuplicateId { line: 2, .. })));

    fs::write(&d, "{\"doc_id\":\"d1\",\"text\":\"a\"}\n").unwrap();
    fs::write(&q, "{\"query_id\":\"q\",\"text\":\"x\",\"gold_doc_id\":\"d9\",\"split\":\"test\"}\n").unwrap();
    assert!(matches!(ingest_corpus(&d, &q), Err(CorpusError::DanglingReference { .. })));

    fs::write(&d, "{\"doc_id\":\"d1\",\"text\":\"a\"}\n\n{not json\n").unwrap();
    fs::write(&q, "").unwrap();
    match ingest_corpus(&d, &q) {
        Err(CorpusError::Parse(JsonlError::Parse { line, .. })) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn ingest_normalizes_and_keeps_order() {
    let dir = tempfile::tempdir().unwrap();
    let (d, q) = (dir.path().join("d.jsonl"), dir.path().join("q.jsonl"));
    fs::write(
        &d,
        "{\"doc_id\":\"b\",\"text\":\"Two\\r\\nlines   \",\"extra\":1}\n{\"doc_id\":\"a\",\"title\":\"T\",\"text\":\"One\"}\n",
    )
    .unwrap();
    fs::write(&q, "{\"query_id\":\"q1\",\"text\":\"one?\",\"gold_doc_id\":\"a\",\"split\":\"train\"}\n").unwrap();
    let c = ingest_corpus(&d, &q).unwrap();
    let ids: Vec<&str> = c.documents().iter().map(|d| d.doc_id.as_str()).collect();
    assert_eq!(ids, ["b", "a"]);
    assert_eq!(c.documents()[0].text, "Two\nlines");
    assert_eq!(c.queries_in(Split::Train).count(), 1);
    assert_eq!(c.queries_in(Split::Test).count(), 0);
}

#[test]
fn validation_examples() {
    let good = Corpus::new(vec![doc("d1", "x"), doc("d2", "y")], vec![query("q1", "d1")]).unwrap();
    assert!(validate_corpus(&good).is_empty());
    assert_eq!(good.len(), 2);

    let empty = Corpus::from_parts(vec![doc("d3", "  ")], vec![]);
    assert_eq!(validate_corpus(&empty), vec!["doc d3: empty text".to_string()]);

    let dangling = Corpus::from_parts(vec![doc("d1", "x")], vec![query("q1", "d2")]);
    let v = validate_corpus(&dangling);
    assert_eq!(v.len(), 1);
    assert!(v[0].contains("q1"));
}
