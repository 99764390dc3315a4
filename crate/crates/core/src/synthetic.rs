//! Seeded generator for a small templated event corpus and the bundled toy
//! taxonomy it is written against.
//!
//! Every document has a theme type; events at even positions come from the
//! theme's templates and the others from random types. Each sentence names
//! the document's actor and place (invented, corpus-unique words), and every
//! sentence after the first opens with a forward causal cue.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Document, Query, Split};
use crate::taxonomy::{Taxonomy, TaxonomyNode};

const TOY_TAXONOMY: &str = include_str!("../data/toy_taxonomy.jsonl");

/// The bundled 28-node event taxonomy.
pub fn toy_taxonomy() -> Taxonomy {
    let nodes: Vec<TaxonomyNode> = TOY_TAXONOMY
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("bundled taxonomy parses"))
        .collect();
    Taxonomy::new(nodes).expect("bundled taxonomy is valid")
}

pub fn toy_taxonomy_jsonl() -> &'static str {
    TOY_TAXONOMY
}

/// (leaf type, templates); `{A}` is the actor and `{P}` the place.
const TEMPLATES: &[(&str, &[&str])] = &[
    ("Attack", &["the attack on {P} was led by {A}", "the raid near {P} was carried out by {A}", "the ambush outside {P} was planned by {A}"]),
    ("Protest", &["the protest in {P} was organized by {A}", "the rally at {P} drew supporters of {A}", "the march through {P} was headed by {A}"]),
    ("Ceasefire", &["the ceasefire around {P} was brokered by {A}", "the truce in {P} was signed by {A}", "the armistice for {P} was accepted by {A}"]),
    ("Flood", &["the flood swept through {P} and stranded {A}", "the deluge over {P} forced {A} to flee", "the inundation of {P} ruined the farm of {A}"]),
    ("Earthquake", &["the earthquake shook {P} and injured {A}", "the tremor under {P} cracked the house of {A}", "the quake near {P} was recorded by {A}"]),
    ("Wildfire", &["the wildfire spread across {P} and trapped {A}", "the blaze outside {P} was fought by {A}", "the inferno in {P} destroyed the barn of {A}"]),
    ("Drought", &["the drought in {P} withered the fields of {A}", "the drought across {P} emptied the wells of {A}"]),
    ("Trade", &["the trade pact between {P} and {A} opened new markets", "the deal signed in {P} gave {A} new buyers", "the export of grain from {P} enriched {A}"]),
    ("Strike", &["the strike at the mill in {P} was called by {A}", "the walkout in {P} was backed by {A}", "the stoppage at {P} was ended by {A}"]),
    ("Bankruptcy", &["the bankruptcy of the bank in {P} ruined {A}", "the insolvency of the firm in {P} was declared by {A}", "the collapse of the firm in {P} hurt {A}"]),
    ("Investment", &["the investment in the harbor of {P} came from {A}", "the funding for the school in {P} was granted by {A}", "the loan to the council of {P} was arranged by {A}"]),
    ("Election", &["the election in {P} was won by {A}", "the vote held in {P} favored {A}", "the ballot in {P} was counted by {A}"]),
    ("Legislation", &["the law passed in {P} was drafted by {A}", "the bill debated in {P} was proposed by {A}", "the decree issued in {P} was signed by {A}"]),
    ("Resignation", &["the resignation of the governor of {P} surprised {A}", "the departure of the envoy from {P} was announced by {A}"]),
    ("Summit", &["the summit hosted in {P} was chaired by {A}", "the meeting in {P} was attended by {A}", "the conference at {P} was opened by {A}"]),
    ("Discovery", &["the discovery of a comet above {P} was made by {A}", "the finding of ancient bones in {P} was reported by {A}"]),
    ("Launch", &["the launch of a rocket from {P} was directed by {A}", "the liftoff near {P} was watched by {A}"]),
    ("Outbreak", &["the outbreak of fever in {P} was traced by {A}", "the epidemic in {P} was contained by {A}"]),
    ("Festival", &["the festival in {P} was hosted by {A}", "the carnival at {P} was funded by {A}", "the parade through {P} was led by {A}"]),
    ("Migration", &["the migration of families from {P} was guided by {A}", "the exodus from {P} was described by {A}"]),
    ("Ceremony", &["the wedding in {P} was attended by {A}", "the ceremony at {P} honored {A}", "the funeral in {P} was arranged by {A}"]),
];

const CUES: &[&str] = &["Therefore", "So", "Thus", "Consequently", "Hence"];
const ONSETS: &[&str] = &["b", "d", "g", "k", "l", "m", "n", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub events_per_doc: usize,
    pub seed: u64,
    /// Per-word drop probability when paraphrasing a query.
    pub dropout: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { n_docs: 64, events_per_doc: 3, seed: 7, dropout: 0.2 }
    }
}

/// Generated corpus plus the source sentence and theme type of each query.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub corpus: Corpus,
    pub sources: Vec<String>,
    pub themes: Vec<String>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn fresh_name(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>) -> String {
    loop {
        let name: String = (0..3)
            .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
            .collect();
        if used.insert(name.clone()) {
            return capitalize(&name);
        }
    }
}

fn paraphrase(sentence: &str, entities: [&str; 2], p: f64, rng: &mut ChaCha8Rng) -> String {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    let is_entity = |w: &str| entities.iter().any(|e| w.trim_matches(|c: char| !c.is_alphanumeric()) == *e);
    let mut keep: Vec<bool> = words.iter().map(|_| rng.gen::<f64>() >= p).collect();
    if keep.iter().all(|&k| k) {
        let plain: Vec<usize> = (0..words.len()).filter(|&i| !is_entity(words[i])).collect();
        keep[*plain.choose(rng).expect("templates have plain words")] = false;
    }
    // a paraphrase keeps at least one named entity
    let named: Vec<usize> = (0..words.len()).filter(|&i| is_entity(words[i])).collect();
    if !named.iter().any(|&i| keep[i]) {
        keep[*named.choose(rng).expect("templates name entities")] = true;
    }
    words.iter().zip(&keep).filter(|(_, &k)| k).map(|(w, _)| *w).collect::<Vec<_>>().join(" ")
}

fn template_count() -> usize {
    TEMPLATES.iter().map(|(_, t)| t.len()).sum()
}

/// Deterministic in `config`. Document ids are `d000`, `d001`, ... and each
/// document has one test query `q...` paraphrasing one of its sentences.
/// Sentences within a document are distinct, so `events_per_doc` is capped
/// at the number of templates.
pub fn generate(config: &SyntheticConfig) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let width = config.n_docs.saturating_sub(1).to_string().len().max(3);
    let mut used = BTreeSet::new();
    let (mut documents, mut queries, mut sources, mut themes) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..config.n_docs {
        let actor = fresh_name(&mut rng, &mut used);
        let place = fresh_name(&mut rng, &mut used);
        let theme = rng.gen_range(0..TEMPLATES.len());
        let mut chosen: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut sentences = Vec::with_capacity(config.events_per_doc);
        for e in 0..config.events_per_doc.min(template_count()) {
            let theme_free: Vec<usize> =
                (0..TEMPLATES[theme].1.len()).filter(|v| !chosen.contains(&(theme, *v))).collect();
            let pick = if e % 2 == 0 && !theme_free.is_empty() {
                (theme, *theme_free.choose(&mut rng).unwrap())
            } else {
                let free = |allow_theme: bool| -> Vec<(usize, usize)> {
                    TEMPLATES
                        .iter()
                        .enumerate()
                        .filter(|(l, _)| allow_theme || *l != theme)
                        .flat_map(|(l, (_, t))| (0..t.len()).map(move |v| (l, v)))
                        .filter(|p| !chosen.contains(p))
                        .collect()
                };
                let mut options = free(false);
                if options.is_empty() {
                    options = free(true);
                }
                *options.choose(&mut rng).unwrap()
            };
            chosen.insert(pick);
            let body = TEMPLATES[pick.0].1[pick.1].replace("{A}", &actor).replace("{P}", &place);
            let sentence = if e == 0 {
                format!("{}.", capitalize(&body))
            } else {
                format!("{}, {}.", CUES.choose(&mut rng).unwrap(), body)
            };
            sentences.push(sentence);
        }
        let doc_id = format!("d{i:0width$}");
        let source = sentences.choose(&mut rng).cloned().unwrap_or_default();
        let text = paraphrase(&source, [&actor, &place], config.dropout, &mut rng);
        queries.push(Query {
            query_id: format!("q{i:0width$}"),
            text,
            gold_doc_id: doc_id.clone(),
            split: Split::Test,
        });
        documents.push(Document { doc_id, title: None, text: sentences.join(" ") });
        sources.push(source);
        themes.push(TEMPLATES[theme].0.to_string());
    }
    Synthetic { corpus: Corpus::from_parts(documents, queries), sources, themes }
}
