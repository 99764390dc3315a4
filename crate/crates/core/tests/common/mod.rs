#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use evret_core::corpus::{Corpus, Document};
use evret_core::extraction::{
    extract_corpus, Agent, AgentReply, Event, EventCandidate, ExrConfig, ExtractionRecord, Payload, RuleAgent, ScriptedAgent,
};
use evret_core::identifiers::{
    build_eids, build_etids, build_tids, build_trie, document_embedding, valid_next_tokens, EidsConfig, Identifier,
    IdentifierIndex, Scheme, SENTINEL,
};
use evret_core::representation::{TrainingUnit, UnitTask};
use evret_core::retrieval::Hit;
use evret_core::seq2seq::{build_vocab, Example, ModelConfig, Seq2SeqModel, TrainConfig};
use evret_core::synthetic::{toy_taxonomy, SyntheticConfig};
use evret_core::taxonomy::{featurize_event, node_profile, CosineScore, ScoreFunction, Taxonomy, TaxonomyNode, TIE_TOLERANCE};
use evret_core::text;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: &[&str] = &[
    "storm", "flood", "harbor", "market", "prices", "rose", "fell", "troops", "crossed", "river", "vote", "held",
    "strike", "began", "bridge", "closed", "rain", "city", "port", "trade",
];

pub fn random_text<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// `n` distinct random identifiers over tokens `t0..t{alphabet}`, of length
/// 1..=max_len.
pub fn random_index<R: Rng>(rng: &mut R, n: usize, alphabet: usize, max_len: usize) -> IdentifierIndex {
    let mut seen = BTreeSet::new();
    let mut ids = Vec::new();
    while ids.len() < n {
        let len = rng.gen_range(1..=max_len);
        let tokens: Vec<String> = (0..len).map(|_| format!("t{}", rng.gen_range(0..alphabet))).collect();
        if seen.insert(tokens.clone()) {
            ids.push(Identifier { doc_id: format!("d{}", ids.len()), scheme: Scheme::EIds, tokens });
        }
    }
    IdentifierIndex::new(Scheme::EIds, ids).unwrap()
}

pub fn units_for<R: Rng>(rng: &mut R, index: &IdentifierIndex, per_doc: usize) -> Vec<TrainingUnit> {
    index
        .identifiers()
        .iter()
        .flat_map(|id| {
            (0..per_doc)
                .map(|_| TrainingUnit {
                    input_text: random_text(rng, 2, 6),
                    doc_id: id.doc_id.clone(),
                    task: UnitTask::IndexEvent,
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn small_config(seed: u64) -> ModelConfig {
    ModelConfig { embed_dim: 6, hidden_dim: 8, attention_dim: 5, init_seed: seed, init_scale: 0.5, ..ModelConfig::default() }
}

pub fn untrained_model<R: Rng>(rng: &mut R, index: &IdentifierIndex) -> (Seq2SeqModel, Vec<TrainingUnit>) {
    let units = units_for(rng, index, 1);
    let model = Seq2SeqModel::new(small_config(rng.gen()), build_vocab(&units, index)).unwrap();
    (model, units)
}

pub fn quiet_train() -> TrainConfig {
    TrainConfig::default()
}

/// Largest per-tensor relative error between the analytic gradient and a
/// central finite difference of the loss, with (name, error) of the worst.
pub fn gradient_check(model: &Seq2SeqModel, batch: &[Example], step: f64) -> (String, f64) {
    let (_, analytic) = model.loss_and_gradient(batch);
    let names: Vec<String> = analytic.tensors().iter().map(|(n, _)| n.clone()).collect();
    let mut probe = model.clone();
    let mut worst = (String::new(), 0.0f64);
    for (t, name) in names.iter().enumerate() {
        let len = probe.params.tensors()[t].1.len();
        let (mut diff, mut a_norm, mut n_norm) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..len {
            let orig = probe.params.tensors()[t].1.data[i];
            probe.params.tensors_mut()[t].data[i] = orig + step;
            let up = probe.batch_loss(batch);
            probe.params.tensors_mut()[t].data[i] = orig - step;
            let down = probe.batch_loss(batch);
            probe.params.tensors_mut()[t].data[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.tensors()[t].1.data[i];
            diff += (a - numeric).powi(2);
            a_norm += a * a;
            n_norm += numeric * numeric;
        }
        let rel = diff.sqrt() / a_norm.sqrt().max(n_norm.sqrt()).max(1e-7);
        if rel > worst.1 {
            worst = (name.clone(), rel);
        }
    }
    worst
}

/// Random tree of `n` nodes; every node's parent is an earlier node.
pub fn random_taxonomy<R: Rng>(rng: &mut R, n: usize) -> Taxonomy {
    let nodes = (0..n)
        .map(|i| TaxonomyNode {
            name: format!("{}_{}_{i}", WORDS.choose(rng).unwrap(), WORDS.choose(rng).unwrap()),
            definition: random_text(rng, 0, 5),
            parent: None,
            depth: 0,
        })
        .collect::<Vec<_>>();
    let names: Vec<String> = nodes.iter().map(|n| n.name.clone()).collect();
    let nodes = nodes
        .into_iter()
        .enumerate()
        .map(|(i, mut node)| {
            if i > 0 {
                node.parent = Some(names[rng.gen_range(0..i)].clone());
            }
            node
        })
        .collect();
    Taxonomy::new(nodes).unwrap()
}

pub fn random_event<R: Rng>(rng: &mut R) -> Event {
    Event {
        event_id: "e1".into(),
        doc_id: "d".into(),
        trigger: WORDS.choose(rng).unwrap().to_string(),
        mention: random_text(rng, 0, 8),
    }
}

/// Scores every leaf on every feature (no candidate pruning) and keeps the
/// first maximum in name order.
pub fn brute_force_leaf(event: &Event, taxonomy: &Taxonomy, score: &dyn ScoreFunction) -> String {
    let features = featurize_event(event);
    let mut leaves: Vec<&str> = taxonomy.leaves().map(|n| n.name.as_str()).collect();
    leaves.sort();
    let mut best: Option<(&str, f64)> = None;
    for leaf in leaves {
        let mut total = 0.0;
        for (term, &w) in &features.weights {
            total += score.feature_score(term, w, &features, leaf);
        }
        if best.is_none_or(|(_, b)| total - b > TIE_TOLERANCE * total.abs().max(b.abs())) {
            best = Some((leaf, total));
        }
    }
    best.unwrap().0.to_string()
}

/// Plain cosine between event features and a node profile.
pub fn cosine(event: &Event, node: &TaxonomyNode) -> f64 {
    let (f, p) = (featurize_event(event), node_profile(node));
    let denom = f.norm() * p.norm();
    if denom == 0.0 { 0.0 } else { f.dot(&p) / denom }
}

/// A random corpus run through rule-based extraction: either a synthetic
/// corpus or short documents drawn from a small sentence pool, so that
/// duplicate texts and identical event features occur.
pub fn random_extracted_corpus<R: Rng>(rng: &mut R) -> (Corpus, Vec<ExtractionRecord>) {
    let corpus = if rng.gen_bool(0.5) {
        let config = SyntheticConfig {
            n_docs: rng.gen_range(1..=40),
            events_per_doc: rng.gen_range(1..=4),
            seed: rng.gen(),
            dropout: 0.2,
        };
        evret_core::synthetic::generate(&config).corpus
    } else {
        let pool: Vec<String> = (0..rng.gen_range(1..=6)).map(|_| format!("{}.", random_text(rng, 1, 5))).collect();
        let docs = (0..rng.gen_range(1..=40))
            .map(|i| Document {
                doc_id: format!("d{i}"),
                title: None,
                text: (0..rng.gen_range(1..=3)).map(|_| pool.choose(rng).unwrap().clone()).collect::<Vec<_>>().join(" "),
            })
            .collect();
        Corpus::new(docs, vec![]).unwrap()
    };
    let rule = RuleAgent::new("rule");
    let agents: Vec<&dyn Agent> = vec![&rule];
    let config = ExrConfig { exchange_rounds: 1, max_reflect_iters: 2, reflector_agent_id: "rule".into() };
    let records = extract_corpus(&corpus, &agents, &config).unwrap();
    (corpus, records)
}

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(what()) }
}

fn check_index(index: &IdentifierIndex, corpus: &Corpus) -> Result<(), String> {
    check(index.len() == corpus.len(), || format!("{}: {} ids for {} docs", index.scheme(), index.len(), corpus.len()))?;
    let distinct: BTreeSet<&Vec<String>> = index.identifiers().iter().map(|i| &i.tokens).collect();
    check(distinct.len() == index.len(), || format!("{}: duplicate identifiers", index.scheme()))?;
    for d in corpus.documents() {
        check(index.get(&d.doc_id).is_some(), || format!("{}: {} has no identifier", index.scheme(), d.doc_id))?;
    }
    let used: BTreeSet<String> = index.identifiers().iter().flat_map(|i| i.tokens.iter().cloned()).collect();
    check(&used == index.vocabulary(), || format!("{}: vocabulary mismatch", index.scheme()))?;

    let trie = build_trie(index).map_err(|e| e.to_string())?;
    let from_trie: BTreeSet<(Vec<String>, String)> = trie.enumerate().into_iter().collect();
    let expected: BTreeSet<(Vec<String>, String)> =
        index.identifiers().iter().map(|i| (i.tokens.clone(), i.doc_id.clone())).collect();
    check(from_trie == expected, || format!("{}: trie round-trip differs", index.scheme()))?;
    let firsts: BTreeSet<String> = index.identifiers().iter().map(|i| i.tokens[0].clone()).collect();
    check(valid_next_tokens(&trie, &[]) == firsts, || format!("{}: root children differ", index.scheme()))?;
    check(valid_next_tokens(&trie, &["</absent>".to_string()]).is_empty(), || "absent prefix has children".into())?;
    for id in index.identifiers() {
        let next = valid_next_tokens(&trie, &id.tokens);
        check(next.contains(SENTINEL), || format!("{}: {:?} cannot end", index.scheme(), id.tokens))?;
    }
    Ok(())
}

/// Every identifier invariant for one random corpus drawn from `seed`.
pub fn identifier_invariants(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (corpus, records) = random_extracted_corpus(&mut rng);

    let length = rng.gen_range(1..=6);
    let tids = build_tids(&corpus, length).map_err(|e| e.to_string())?;
    check_index(&tids, &corpus)?;
    for (d, id) in corpus.documents().iter().zip(tids.identifiers()) {
        let head: Vec<String> = text::tokens(&d.text).into_iter().take(length).collect();
        let body = match id.tokens.last() {
            Some(t) if t.starts_with('#') && id.tokens.len() > head.len() => &id.tokens[..id.tokens.len() - 1],
            _ => &id.tokens[..],
        };
        check(body == head.as_slice(), || format!("TIds: {:?} is not the head of {}", id.tokens, d.doc_id))?;
    }

    let eids_config = EidsConfig { branching: rng.gen_range(2..=4), leaf_cap: rng.gen_range(1..=8), seed: rng.gen() };
    let eids = build_eids(&corpus, &records, eids_config).map_err(|e| e.to_string())?;
    check_index(&eids, &corpus)?;
    let again = build_eids(&corpus, &records, eids_config).map_err(|e| e.to_string())?;
    check(eids == again, || "EIds: rebuild differs".into())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    eids.write(&a).map_err(|e| e.to_string())?;
    again.write(&b).map_err(|e| e.to_string())?;
    check(std::fs::read(&a).ok() == std::fs::read(&b).ok(), || "EIds: files differ".into())?;
    let embeddings: Vec<_> = records.iter().map(|r| document_embedding(&r.events)).collect();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            if embeddings[i] == embeddings[j] {
                let (x, y) = (&eids.identifiers()[i].tokens, &eids.identifiers()[j].tokens);
                check(x.len() == y.len() && x[..x.len() - 1] == y[..y.len() - 1], || {
                    format!("EIds: equal features but {x:?} vs {y:?}")
                })?;
            }
        }
    }

    let taxonomy = if rng.gen_bool(0.5) {
        toy_taxonomy()
    } else {
        let n = rng.gen_range(1..=50);
        random_taxonomy(&mut rng, n)
    };
    let score = CosineScore::new(&taxonomy);
    let etids = build_etids(&corpus, &records, &taxonomy, &score).map_err(|e| e.to_string())?;
    check_index(&etids, &corpus)?;
    for id in etids.identifiers() {
        let (ordinal, path) = id.tokens.split_last().unwrap();
        let leaf = path.last().unwrap();
        check(ordinal.starts_with('#') && taxonomy.is_leaf(leaf), || format!("ETIds: {:?}", id.tokens))?;
        let expected = taxonomy.path_from_root(leaf).map_err(|e| e.to_string())?;
        check(path == expected.as_slice(), || format!("ETIds: {:?} is not a root path", id.tokens))?;
    }
    Ok(())
}

/// Every identifier scored by its full sequence log-probability, best
/// first, ties in token order.
pub fn brute_force(model: &Seq2SeqModel, index: &IdentifierIndex, query: &str) -> Vec<Hit> {
    let mut all: Vec<Hit> = index
        .identifiers()
        .iter()
        .map(|id| Hit {
            doc_id: id.doc_id.clone(),
            identifier: id.tokens.clone(),
            logprob: model.sequence_logprob(query, &id.tokens).unwrap(),
        })
        .collect();
    all.sort_by(|a, b| b.logprob.total_cmp(&a.logprob).then_with(|| a.identifier.cmp(&b.identifier)));
    all
}

pub fn event_candidate(trigger: &str) -> EventCandidate {
    EventCandidate { trigger: trigger.into(), mention: format!("The {trigger} happened.") }
}

/// Answers its own round-0 set, later the union of its latest answer and
/// every peer answer, in first-seen order.
pub fn union_agent(id: &str, own: &'static str) -> ScriptedAgent {
    let mine = Arc::new(Mutex::new(vec![event_candidate(own)]));
    ScriptedAgent::from_fn(id, move |req, _| {
        let mut current = mine.lock().unwrap();
        for peer in req.peer_responses {
            if let Payload::Events(v) = &peer.payload {
                for e in v {
                    if !current.contains(e) {
                        current.push(e.clone());
                    }
                }
            }
        }
        Ok(AgentReply::events(current.clone()))
    })
}
