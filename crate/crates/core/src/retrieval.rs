//! Trie-constrained beam search over identifier tokens and Hits@k scoring.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Query;
use crate::identifiers::{IdentifierTrie, PrefixTrie};
use crate::par;
use crate::seq2seq::{DecoderState, Seq2SeqModel, TokenId, BOS, EOS};

pub const DEFAULT_KS: [usize; 3] = [1, 10, 20];

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("identifier token `{0}` is unknown to the model vocabulary")]
    UnknownToken(String),
    #[error("identifier trie is empty")]
    EmptyTrie,
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct BeamHypothesis {
    pub prefix: Vec<TokenId>,
    pub logprob: f64,
    pub finished: bool,
    state: Arc<DecoderState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub identifier: Vec<String>,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

/// A model paired with the identifier trie re-keyed to its vocabulary.
pub struct Retriever<'a> {
    model: &'a Seq2SeqModel,
    trie: PrefixTrie<TokenId>,
}

impl<'a> Retriever<'a> {
    pub fn new(model: &'a Seq2SeqModel, trie: &IdentifierTrie) -> Result<Self, RetrievalError> {
        if trie.is_empty() {
            return Err(RetrievalError::EmptyTrie);
        }
        let mut unknown = None;
        let ids = trie.map_tokens(|t| {
            model.vocab.identifier_id(t).unwrap_or_else(|| {
                unknown.get_or_insert_with(|| t.clone());
                0
            })
        });
        match unknown {
            Some(t) => Err(RetrievalError::UnknownToken(t)),
            None => Ok(Retriever { model, trie: ids }),
        }
    }

    pub fn model(&self) -> &Seq2SeqModel {
        self.model
    }

    fn cmp(&self, a: &BeamHypothesis, b: &BeamHypothesis) -> Ordering {
        b.logprob.total_cmp(&a.logprob).then_with(|| {
            let sa = a.prefix.iter().map(|&t| self.model.vocab.identifier_token(t));
            let sb = b.prefix.iter().map(|&t| self.model.vocab.identifier_token(t));
            sa.cmp(sb)
        })
    }

    /// Beam search in which every expansion is restricted to tokens that
    /// continue a stored identifier. Returns at most `width` hits, best
    /// first; equal scores are ordered by identifier tokens.
    pub fn search(&self, text: &str, width: usize) -> Vec<Hit> {
        self.search_ids(&self.model.encode_text(text), width)
    }

    pub fn search_ids(&self, input: &[TokenId], width: usize) -> Vec<Hit> {
        let width = width.max(1);
        let enc = self.model.encode(input);
        let mut beams = vec![BeamHypothesis {
            prefix: Vec::new(),
            logprob: 0.0,
            finished: false,
            state: Arc::new(self.model.initial_state(&enc)),
        }];
        let mut pool: Vec<BeamHypothesis> = Vec::new();
        for _ in 0..=self.trie.max_depth() {
            if beams.is_empty() {
                break;
            }
            let mut candidates = Vec::new();
            for beam in &beams {
                let next = self.trie.valid_next(&beam.prefix);
                let prev = beam.prefix.last().copied().unwrap_or(BOS);
                let (logp, state) = self.model.decode_step(&enc, &beam.state, prev);
                let state = Arc::new(state);
                for &tok in next {
                    let mut prefix = beam.prefix.clone();
                    prefix.push(tok);
                    candidates.push(BeamHypothesis {
                        prefix,
                        logprob: beam.logprob + logp[tok as usize],
                        finished: tok == EOS,
                        state: Arc::clone(&state),
                    });
                }
            }
            candidates.sort_by(|a, b| self.cmp(a, b));
            candidates.truncate(width);
            let (done, open): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|c| c.finished);
            pool.extend(done);
            pool.sort_by(|a, b| self.cmp(a, b));
            pool.truncate(width);
            beams = open;
            // scores only decrease, so beams strictly below a full pool are dead
            if pool.len() == width {
                let worst = pool[width - 1].logprob;
                if beams.iter().all(|b| b.logprob < worst) {
                    break;
                }
            }
        }
        pool.into_iter()
            .map(|h| {
                let tokens = &h.prefix[..h.prefix.len() - 1];
                let doc_id = self.trie.get(tokens).expect("decoded identifier must exist in the index");
                Hit {
                    doc_id: doc_id.to_string(),
                    identifier: tokens
                        .iter()
                        .map(|&t| self.model.vocab.identifier_token(t).expect("known token").to_string())
                        .collect(),
                    logprob: h.logprob,
                }
            })
            .collect()
    }
}

pub fn constrained_beam_search(
    model: &Seq2SeqModel,
    query: &str,
    trie: &IdentifierTrie,
    width: usize,
) -> Result<Vec<Hit>, RetrievalError> {
    Ok(Retriever::new(model, trie)?.search(query, width))
}

/// Fraction of results whose gold document is among the first `k` hits;
/// `None` when there are no results. A query without a gold entry counts
/// as a miss.
pub fn hits_at_k(results: &[RankedResult], gold: &BTreeMap<String, String>, k: usize) -> Option<f64> {
    if results.is_empty() {
        return None;
    }
    let found = results
        .iter()
        .filter(|r| match gold.get(&r.query_id) {
            Some(g) => r.hits.iter().take(k).any(|h| &h.doc_id == g),
            None => false,
        })
        .count();
    Some(found as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: String,
    pub query_count: usize,
    /// (k, hit rate); the rate is undefined without queries.
    pub rates: Vec<(usize, Option<f64>)>,
}

/// One line of machine-readable evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub variant: String,
    pub k: usize,
    pub hits: Option<f64>,
    pub n_queries: usize,
}

impl MetricsReport {
    pub fn rate(&self, k: usize) -> Option<f64> {
        self.rates.iter().find(|(kk, _)| *kk == k).and_then(|(_, r)| *r)
    }

    pub fn records(&self) -> Vec<MetricsRecord> {
        self.rates
            .iter()
            .map(|&(k, hits)| MetricsRecord { variant: self.variant.clone(), k, hits, n_queries: self.query_count })
            .collect()
    }
}

pub fn format_table(reports: &[MetricsReport]) -> String {
    let mut ks: Vec<usize> = reports.iter().flat_map(|r| r.rates.iter().map(|(k, _)| *k)).collect();
    ks.sort_unstable();
    ks.dedup();
    let name_w = reports.iter().map(|r| r.variant.len()).max().unwrap_or(0).max("variant".len());
    let mut out = format!("{:<name_w$}  {:>7}", "variant", "queries");
    for k in &ks {
        let _ = write!(out, "  {:>8}", format!("Hits@{k}"));
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<name_w$}  {:>7}", r.variant, r.query_count);
        for &k in &ks {
            let cell = match r.rate(k) {
                Some(v) => format!("{:.4}", v),
                None => "n/a".into(),
            };
            let _ = write!(out, "  {cell:>8}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub results: Vec<RankedResult>,
}

/// Searches every query (concurrently) and aggregates Hits@k.
pub fn evaluate(
    model: &Seq2SeqModel,
    queries: &[Query],
    trie: &IdentifierTrie,
    width: usize,
    ks: &[usize],
    variant: &str,
) -> Result<Evaluation, RetrievalError> {
    let max_k = ks.iter().copied().max().unwrap_or(1);
    if width < max_k {
        return Err(RetrievalError::Config(format!("beam width {width} is smaller than the largest k ({max_k})")));
    }
    let retriever = Retriever::new(model, trie)?;
    let results: Vec<RankedResult> = par::map(queries, |q| RankedResult {
        query_id: q.query_id.clone(),
        hits: retriever.search(&q.text, width),
    });
    let gold: BTreeMap<String, String> =
        queries.iter().map(|q| (q.query_id.clone(), q.gold_doc_id.clone())).collect();
    let rates = ks.iter().map(|&k| (k, hits_at_k(&results, &gold, k))).collect();
    Ok(Evaluation {
        report: MetricsReport { variant: variant.to_string(), query_count: queries.len(), rates },
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(q: &str, docs: &[&str]) -> RankedResult {
        RankedResult {
            query_id: q.into(),
            hits: docs
                .iter()
                .enumerate()
                .map(|(i, d)| Hit { doc_id: d.to_string(), identifier: vec![], logprob: -(i as f64) })
                .collect(),
        }
    }

    #[test]
    fn hits_hand_counted() {
        let results = vec![result("q1", &["a", "b"]), result("q2", &["x", "y", "b"])];
        let gold: BTreeMap<_, _> = [("q1".to_string(), "a".to_string()), ("q2".into(), "b".into())].into();
        assert_eq!(hits_at_k(&results, &gold, 1), Some(0.5));
        assert_eq!(hits_at_k(&results, &gold, 10), Some(1.0));
        let none: BTreeMap<_, _> = [("q1".to_string(), "zz".to_string())].into();
        assert_eq!(hits_at_k(&results, &none, 20), Some(0.0));
        assert_eq!(hits_at_k(&[], &gold, 1), None);
    }

    #[test]
    fn table_marks_undefined() {
        let r = MetricsReport { variant: "ERReps+ETIds".into(), query_count: 0, rates: vec![(1, None)] };
        let t = format_table(&[r.clone()]);
        assert!(t.contains("n/a"), "{t}");
        assert_eq!(r.records()[0].hits, None);
    }
}
