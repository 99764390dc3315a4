mod common;

use std::collections::BTreeSet;

use common::{random_index, random_text};
use evret_core::corpus::{Query, Split};
use evret_core::extraction::{extract_corpus, Agent, ExrConfig, RuleAgent};
use evret_core::identifiers::{build_etids, build_trie, Identifier, IdentifierIndex, Scheme};
use evret_core::representation::{build_units, RepresentationConfig, TrainingUnit, UnitTask};
use evret_core::retrieval::{evaluate, DEFAULT_KS};
use evret_core::seq2seq::{build_vocab, train, ModelConfig, Seq2SeqModel, TrainConfig};
use evret_core::synthetic::{generate, toy_taxonomy, SyntheticConfig};
use evret_core::taxonomy::CosineScore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn greedy_matches(model: &Seq2SeqModel, unit: &TrainingUnit, index: &IdentifierIndex) -> bool {
    let id = index.get(&unit.doc_id).unwrap();
    let want = model.vocab.encode_identifier(&id.tokens).unwrap();
    let got = model.greedy_decode(&model.encode_text(&unit.input_text), want.len() + 2);
    got == want[..want.len() - 1]
}

#[test]
fn overfits_a_single_example() {
    let tokens: Vec<String> = ["Event", "Disaster", "Flood", "#0"].iter().map(|t| t.to_string()).collect();
    let index =
        IdentifierIndex::new(Scheme::ETIds, vec![Identifier { doc_id: "d0".into(), scheme: Scheme::ETIds, tokens }]).unwrap();
    let units = vec![TrainingUnit {
        input_text: "The flood swept through Ruleku.".into(),
        doc_id: "d0".into(),
        task: UnitTask::IndexEvent,
    }];
    let mut model = Seq2SeqModel::new(ModelConfig::default(), build_vocab(&units, &index)).unwrap();
    let report = train(&mut model, &units, &index, &TrainConfig { epochs: 200, ..TrainConfig::default() }, |_, _| {}).unwrap();
    assert!(report.final_loss < 0.05, "final loss {}", report.final_loss);
    assert!(greedy_matches(&model, &units[0], &index));
}

#[test]
fn lr_zero_leaves_the_loss_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let index = random_index(&mut rng, 6, 4, 3);
    let units = common::units_for(&mut rng, &index, 2);
    let mut model = Seq2SeqModel::new(common::small_config(1), build_vocab(&units, &index)).unwrap();
    let config = TrainConfig { learning_rate: 0.0, epochs: 3, ..TrainConfig::default() };
    let report = train(&mut model, &units, &index, &config, |_, _| {}).unwrap();
    assert!((report.final_loss - report.initial_loss).abs() <= 1e-9);
}

/// Random training sets of up to 64 units, one distinct identifier each.
#[test]
fn memorizes_small_training_sets() {
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = [64, 40, 17][seed as usize];
        let index = random_index(&mut rng, n, 8, 4);
        let mut seen = BTreeSet::new();
        let units: Vec<TrainingUnit> = index
            .identifiers()
            .iter()
            .map(|id| {
                let input_text = loop {
                    let t = random_text(&mut rng, 3, 6);
                    if seen.insert(t.clone()) {
                        break t;
                    }
                };
                TrainingUnit { input_text, doc_id: id.doc_id.clone(), task: UnitTask::IndexEvent }
            })
            .collect();
        let mut model = Seq2SeqModel::new(ModelConfig::default(), build_vocab(&units, &index)).unwrap();
        train(&mut model, &units, &index, &TrainConfig::default(), |_, _| {}).unwrap();
        let correct = units.iter().filter(|u| greedy_matches(&model, u, &index)).count();
        let accuracy = correct as f64 / units.len() as f64;
        assert!(accuracy >= 0.95, "seed {seed}: {correct}/{} correct", units.len());
    }
}

#[test]
fn queries_repeating_training_mentions_are_retrieved_first() {
    let corpus = generate(&SyntheticConfig { n_docs: 10, events_per_doc: 3, seed: 11, dropout: 0.2 }).corpus;
    let rule = RuleAgent::new("rule");
    let agents: Vec<&dyn Agent> = vec![&rule];
    let exr = ExrConfig { exchange_rounds: 1, max_reflect_iters: 2, reflector_agent_id: "rule".into() };
    let records = extract_corpus(&corpus, &agents, &exr).unwrap();
    let taxonomy = toy_taxonomy();
    let index = build_etids(&corpus, &records, &taxonomy, &CosineScore::new(&taxonomy)).unwrap();
    let units: Vec<TrainingUnit> = records.iter().flat_map(|r| build_units(r, &RepresentationConfig::default())).collect();
    let mut model = Seq2SeqModel::new(ModelConfig::default(), build_vocab(&units, &index)).unwrap();
    train(&mut model, &units, &index, &TrainConfig { token_dropout: 0.0, ..TrainConfig::default() }, |_, _| {}).unwrap();

    let queries: Vec<Query> = records
        .iter()
        .enumerate()
        .map(|(i, r)| Query {
            query_id: format!("q{i}"),
            text: r.events[i % r.events.len()].mention.clone(),
            gold_doc_id: r.doc_id.clone(),
            split: Split::Test,
        })
        .collect();
    let trie = build_trie(&index).unwrap();
    let ev = evaluate(&model, &queries, &trie, 20, &DEFAULT_KS, "ERReps+ETIds").unwrap();
    assert_eq!(ev.report.rate(1), Some(1.0), "{:?}", ev.report);
}
