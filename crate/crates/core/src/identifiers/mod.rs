//! Document identifiers under three schemes and the trie that constrains
//! decoding to them.
//!
//! * `TIds`: the first `L` tokens of the document text.
//! * `EIds`: cluster indices from recursive k-means over event features.
//! * `ETIds`: the root-to-leaf taxonomy path of the document's dominant event
//!   type.
//!
//! Whenever two documents would share an identifier, an ordinal token keeps
//! them apart, so every index is a bijection between documents and token
//! sequences.

mod kmeans;
mod trie;

pub use kmeans::{kmeans, SparsePoint};
pub use trie::{DuplicateSequence, PrefixTrie};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::extraction::{fallback_event, Event, ExtractionRecord};
use crate::jsonl::{self, JsonlError};
use crate::taxonomy::{featurize_event, map_event_to_type, FeatureVector, ScoreFunction, Taxonomy};
use crate::text;

/// End-of-identifier marker. Never a regular identifier token.
pub const SENTINEL: &str = "</id>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    TIds,
    EIds,
    ETIds,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TIds" => Ok(Scheme::TIds),
            "EIds" => Ok(Scheme::EIds),
            "ETIds" => Ok(Scheme::ETIds),
            other => Err(format!("unknown identifier scheme `{other}` (expected TIds, EIds or ETIds)")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::TIds => "TIds",
            Scheme::EIds => "EIds",
            Scheme::ETIds => "ETIds",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Identifier {
    pub doc_id: String,
    pub scheme: Scheme,
    pub tokens: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum IdentifierError {
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error("identifier index invariant violated: {0}")]
    InternalInvariantViolation(String),
}

/// Bijective document <-> identifier map for one scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifierIndex {
    scheme: Scheme,
    identifiers: Vec<Identifier>,
    by_doc: HashMap<String, usize>,
    vocabulary: BTreeSet<String>,
}

impl IdentifierIndex {
    pub fn new(scheme: Scheme, identifiers: Vec<Identifier>) -> Result<Self, IdentifierError> {
        let violation = |m: String| IdentifierError::InternalInvariantViolation(m);
        let mut by_doc = HashMap::with_capacity(identifiers.len());
        let mut seen_tokens: HashMap<&[String], &str> = HashMap::with_capacity(identifiers.len());
        let mut vocabulary = BTreeSet::new();
        for (i, id) in identifiers.iter().enumerate() {
            if id.scheme != scheme {
                return Err(violation(format!("{}: scheme {} in a {scheme} index", id.doc_id, id.scheme)));
            }
            if id.tokens.is_empty() {
                return Err(violation(format!("{}: empty identifier", id.doc_id)));
            }
            if id.tokens.iter().any(|t| t == SENTINEL || t.is_empty()) {
                return Err(violation(format!("{}: reserved or empty token", id.doc_id)));
            }
            if by_doc.insert(id.doc_id.clone(), i).is_some() {
                return Err(violation(format!("{}: two identifiers", id.doc_id)));
            }
            if let Some(other) = seen_tokens.insert(&id.tokens, &id.doc_id) {
                return Err(violation(format!("{} and {other} share identifier {:?}", id.doc_id, id.tokens)));
            }
            vocabulary.extend(id.tokens.iter().cloned());
        }
        Ok(IdentifierIndex { scheme, identifiers, by_doc, vocabulary })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Identifiers in corpus order.
    pub fn identifiers(&self) -> &[Identifier] {
        &self.identifiers
    }

    pub fn get(&self, doc_id: &str) -> Option<&Identifier> {
        self.by_doc.get(doc_id).map(|&i| &self.identifiers[i])
    }

    /// Exactly the tokens used by some identifier.
    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.identifiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identifiers.is_empty()
    }

    pub fn write(&self, path: &Path) -> Result<(), JsonlError> {
        jsonl::write(path, &self.identifiers)
    }

    pub fn read(path: &Path) -> Result<Self, IdentifierError> {
        let ids: Vec<Identifier> = jsonl::read_records(path)?;
        let scheme = ids.first().map(|i| i.scheme).unwrap_or(Scheme::TIds);
        IdentifierIndex::new(scheme, ids)
    }
}

pub type IdentifierTrie = PrefixTrie<String>;

pub fn build_trie(index: &IdentifierIndex) -> Result<IdentifierTrie, IdentifierError> {
    let mut trie = PrefixTrie::new(SENTINEL.to_string());
    for id in index.identifiers() {
        trie.insert(&id.tokens, id.doc_id.clone())
            .map_err(|e| IdentifierError::InternalInvariantViolation(format!("{}: {e}", id.doc_id)))?;
    }
    Ok(trie)
}

pub fn valid_next_tokens(trie: &IdentifierTrie, prefix: &[String]) -> BTreeSet<String> {
    trie.valid_next(prefix).into_iter().cloned().collect()
}

fn ordinal(k: usize) -> String {
    format!("#{k}")
}

/// First `length` tokens of every document; repeated token lists get an
/// ordinal `#k`, where `k` counts earlier documents with the same tokens.
pub fn build_tids(corpus: &Corpus, length: usize) -> Result<IdentifierIndex, IdentifierError> {
    let length = length.max(1);
    let mut seen: HashMap<Vec<String>, usize> = HashMap::new();
    let ids = corpus
        .documents()
        .iter()
        .map(|doc| {
            let mut tokens: Vec<String> = text::tokens(&doc.text).into_iter().take(length).collect();
            let count = seen.entry(tokens.clone()).or_insert(0);
            if *count > 0 || tokens.is_empty() {
                tokens.push(ordinal(*count));
            }
            *count += 1;
            Identifier { doc_id: doc.doc_id.clone(), scheme: Scheme::TIds, tokens }
        })
        .collect();
    IdentifierIndex::new(Scheme::TIds, ids)
}

fn events_for<'a>(
    doc: &Document,
    records: &'a HashMap<&str, &ExtractionRecord>,
) -> std::borrow::Cow<'a, [Event]> {
    match records.get(doc.doc_id.as_str()) {
        Some(r) if !r.events.is_empty() => std::borrow::Cow::Borrowed(&r.events),
        _ => std::borrow::Cow::Owned(vec![fallback_event(doc)]),
    }
}

fn record_map(records: &[ExtractionRecord]) -> HashMap<&str, &ExtractionRecord> {
    records.iter().map(|r| (r.doc_id.as_str(), r)).collect()
}

/// Mean of the event feature vectors, L2-normalized.
pub fn document_embedding(events: &[Event]) -> FeatureVector {
    let mut sum = FeatureVector::default();
    for e in events {
        for (t, w) in featurize_event(e).weights {
            *sum.weights.entry(t).or_insert(0.0) += w / events.len() as f64;
        }
    }
    let norm = sum.norm();
    if norm > 0.0 {
        for w in sum.weights.values_mut() {
            *w /= norm;
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EidsConfig {
    /// Clusters per level, at least 2.
    pub branching: usize,
    /// Largest bucket that is not split further, at least 1.
    pub leaf_cap: usize,
    pub seed: u64,
}

impl Default for EidsConfig {
    fn default() -> Self {
        EidsConfig { branching: 10, leaf_cap: 10, seed: 0 }
    }
}

/// Recursive k-means over document embeddings. Each level appends the
/// cluster index; buckets of at most `leaf_cap` documents (or buckets that
/// cannot be split) append the within-bucket ordinal instead.
pub fn build_eids(
    corpus: &Corpus,
    records: &[ExtractionRecord],
    config: EidsConfig,
) -> Result<IdentifierIndex, IdentifierError> {
    let branching = config.branching.max(2);
    let leaf_cap = config.leaf_cap.max(1);
    let records = record_map(records);

    let mut term_ids: BTreeMap<String, usize> = BTreeMap::new();
    let embeddings: Vec<FeatureVector> =
        corpus.documents().iter().map(|d| document_embedding(&events_for(d, &records))).collect();
    for e in &embeddings {
        for t in e.weights.keys() {
            let next = term_ids.len();
            term_ids.entry(t.clone()).or_insert(next);
        }
    }
    let points: Vec<SparsePoint> = embeddings
        .iter()
        .map(|e| {
            let mut p: SparsePoint = e.weights.iter().map(|(t, &w)| (term_ids[t], w)).collect();
            p.sort_by_key(|&(d, _)| d);
            p
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tokens: Vec<Vec<String>> = vec![Vec::new(); points.len()];
    let mut stack: Vec<(Vec<usize>, Vec<String>)> = vec![((0..points.len()).collect(), Vec::new())];
    // explicit stack in DFS order keeps rng consumption deterministic
    while let Some((members, prefix)) = stack.pop() {
        let assign_ordinals = |tokens: &mut Vec<Vec<String>>| {
            for (ord, &m) in members.iter().enumerate() {
                let mut t = prefix.clone();
                t.push(ord.to_string());
                tokens[m] = t;
            }
        };
        if members.len() <= leaf_cap {
            assign_ordinals(&mut tokens);
            continue;
        }
        // local dimension space keeps centroids small
        let mut local: BTreeMap<usize, usize> = BTreeMap::new();
        for &m in &members {
            for &(d, _) in &points[m] {
                let next = local.len();
                local.entry(d).or_insert(next);
            }
        }
        let local_points: Vec<SparsePoint> = members
            .iter()
            .map(|&m| {
                let mut p: SparsePoint = points[m].iter().map(|&(d, v)| (local[&d], v)).collect();
                p.sort_by_key(|&(d, _)| d);
                p
            })
            .collect();
        let refs: Vec<&SparsePoint> = local_points.iter().collect();
        let (assign, groups) = kmeans(&refs, local.len(), branching, &mut rng);
        if groups < 2 {
            assign_ordinals(&mut tokens);
            continue;
        }
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); groups];
        for (&m, &c) in members.iter().zip(&assign) {
            buckets[c].push(m);
        }
        for (c, bucket) in buckets.into_iter().enumerate().rev() {
            let mut p = prefix.clone();
            p.push(c.to_string());
            stack.push((bucket, p));
        }
    }

    let ids = corpus
        .documents()
        .iter()
        .zip(tokens)
        .map(|(d, tokens)| Identifier { doc_id: d.doc_id.clone(), scheme: Scheme::EIds, tokens })
        .collect();
    IdentifierIndex::new(Scheme::EIds, ids)
}

/// The leaf most of a document's events map to; ties go to the
/// lexicographically smallest leaf.
pub fn representative_leaf(events: &[Event], taxonomy: &Taxonomy, score: &dyn ScoreFunction) -> String {
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for e in events {
        *votes.entry(map_event_to_type(e, taxonomy, score).name.as_str()).or_insert(0) += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (leaf, n) in votes {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((leaf, n));
        }
    }
    best.map(|(l, _)| l.to_string())
        .unwrap_or_else(|| taxonomy.leaves().next().expect("taxonomy has a leaf").name.clone())
}

/// Taxonomy path of each document's representative leaf followed by an
/// ordinal `#k` that counts earlier documents in the same leaf.
pub fn build_etids(
    corpus: &Corpus,
    records: &[ExtractionRecord],
    taxonomy: &Taxonomy,
    score: &dyn ScoreFunction,
) -> Result<IdentifierIndex, IdentifierError> {
    let records = record_map(records);
    let leaves = crate::par::map(corpus.documents(), |d| {
        representative_leaf(&events_for(d, &records), taxonomy, score)
    });
    let mut bucket_sizes: HashMap<String, usize> = HashMap::new();
    let mut ids = Vec::with_capacity(leaves.len());
    for (doc, leaf) in corpus.documents().iter().zip(leaves) {
        let mut tokens = taxonomy
            .path_from_root(&leaf)
            .map_err(|e| IdentifierError::InternalInvariantViolation(e.to_string()))?;
        let k = bucket_sizes.entry(leaf).or_insert(0);
        tokens.push(ordinal(*k));
        *k += 1;
        ids.push(Identifier { doc_id: doc.doc_id.clone(), scheme: Scheme::ETIds, tokens });
    }
    IdentifierIndex::new(Scheme::ETIds, ids)
}
