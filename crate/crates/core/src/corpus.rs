//! Documents, labeled queries and their line-delimited persistence.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    pub gold_doc_id: String,
    pub split: Split,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Parse(#[from] JsonlError),
    #[error("duplicate id `{id}` at {path}:{line}")]
    DuplicateId { id: String, path: String, line: usize },
    #[error("query `{query_id}` references unknown document `{gold_doc_id}`")]
    DanglingReference { query_id: String, gold_doc_id: String },
    #[error("invalid record at {path}:{line}: {message}")]
    InvalidRecord { path: String, line: usize, message: String },
}

const DOC_KEYS: &[&str] = &["doc_id", "title", "text"];
const QUERY_KEYS: &[&str] = &["query_id", "text", "gold_doc_id", "split"];

/// An immutable, validated collection of documents and queries. Iteration
/// order is insertion order everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    documents: Vec<Document>,
    queries: Vec<Query>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus without validating record contents beyond id
    /// uniqueness. Use [`validate_corpus`] to audit the result.
    pub fn from_parts(documents: Vec<Document>, queries: Vec<Query>) -> Self {
        let mut by_id = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            by_id.entry(d.doc_id.clone()).or_insert(i);
        }
        Corpus { documents, queries, by_id }
    }

    /// Builds a corpus and rejects duplicate ids or dangling queries.
    pub fn new(documents: Vec<Document>, queries: Vec<Query>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, d) in documents.iter().enumerate() {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    id: d.doc_id.clone(),
                    path: "<memory>".into(),
                    line: i + 1,
                });
            }
        }
        let corpus = Corpus::from_parts(documents, queries);
        for q in &corpus.queries {
            if corpus.document(&q.gold_doc_id).is_none() {
                return Err(CorpusError::DanglingReference {
                    query_id: q.query_id.clone(),
                    gold_doc_id: q.gold_doc_id.clone(),
                });
            }
        }
        Ok(corpus)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn queries_in(&self, split: Split) -> impl Iterator<Item = &Query> {
        self.queries.iter().filter(move |q| q.split == split)
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn write(&self, documents_path: &Path, queries_path: &Path) -> Result<(), CorpusError> {
        jsonl::write(documents_path, &self.documents)?;
        jsonl::write(queries_path, &self.queries)?;
        Ok(())
    }
}

fn warn_unknown_keys(
    raw: &serde_json::Map<String, serde_json::Value>,
    known: &[&str],
    path: &Path,
    line: usize,
) {
    for key in raw.keys().filter(|k| !known.contains(&k.as_str())) {
        log::warn!("{}:{line}: ignoring unknown key `{key}`", path.display());
    }
}

/// Reads a documents file and a queries file, normalizes text and checks
/// every corpus invariant.
pub fn ingest_corpus(documents_path: &Path, queries_path: &Path) -> Result<Corpus, CorpusError> {
    let doc_lines = jsonl::read::<Document>(documents_path)?;
    let mut documents = Vec::with_capacity(doc_lines.len());
    let mut seen = HashSet::new();
    for line in doc_lines {
        warn_unknown_keys(&line.raw, DOC_KEYS, documents_path, line.number);
        let mut doc = line.record;
        let invalid = |message: &str| CorpusError::InvalidRecord {
            path: documents_path.display().to_string(),
            line: line.number,
            message: message.to_string(),
        };
        if doc.doc_id.trim().is_empty() {
            return Err(invalid("empty doc_id"));
        }
        doc.text = text::normalize(&doc.text);
        if doc.text.trim().is_empty() {
            return Err(invalid("empty text"));
        }
        doc.title = doc.title.map(|t| text::normalize(&t));
        if !seen.insert(doc.doc_id.clone()) {
            return Err(CorpusError::DuplicateId {
                id: doc.doc_id,
                path: documents_path.display().to_string(),
                line: line.number,
            });
        }
        documents.push(doc);
    }

    let query_lines = jsonl::read::<Query>(queries_path)?;
    let mut queries = Vec::with_capacity(query_lines.len());
    let mut seen_q = HashSet::new();
    for line in query_lines {
        warn_unknown_keys(&line.raw, QUERY_KEYS, queries_path, line.number);
        let mut q = line.record;
        q.text = text::normalize(&q.text);
        if q.text.trim().is_empty() {
            return Err(CorpusError::InvalidRecord {
                path: queries_path.display().to_string(),
                line: line.number,
                message: "empty text".into(),
            });
        }
        if !seen_q.insert(q.query_id.clone()) {
            return Err(CorpusError::DuplicateId {
                id: q.query_id,
                path: queries_path.display().to_string(),
                line: line.number,
            });
        }
        if !seen.contains(&q.gold_doc_id) {
            return Err(CorpusError::DanglingReference {
                query_id: q.query_id,
                gold_doc_id: q.gold_doc_id,
            });
        }
        queries.push(q);
    }
    Ok(Corpus::from_parts(documents, queries))
}

/// Lists every invariant violation; empty iff the corpus is well formed.
pub fn validate_corpus(corpus: &Corpus) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for d in &corpus.documents {
        if d.doc_id.trim().is_empty() {
            out.push("doc <empty id>: empty doc_id".to_string());
        }
        if !seen.insert(d.doc_id.as_str()) {
            out.push(format!("doc {}: duplicate doc_id", d.doc_id));
        }
        if d.text.trim().is_empty() {
            out.push(format!("doc {}: empty text", d.doc_id));
        }
    }
    let mut seen_q = HashSet::new();
    for q in &corpus.queries {
        if !seen_q.insert(q.query_id.as_str()) {
            out.push(format!("query {}: duplicate query_id", q.query_id));
        }
        if q.text.trim().is_empty() {
            out.push(format!("query {}: empty text", q.query_id));
        }
        if !seen.contains(q.gold_doc_id.as_str()) {
            out.push(format!(
                "query {}: gold_doc_id {} does not resolve",
                q.query_id, q.gold_doc_id
            ));
        }
    }
    out
}
