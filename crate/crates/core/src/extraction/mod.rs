//! Event and causal-relation extraction.
//!
//! Both phases run the same two-step procedure over a set of [`Agent`]s:
//! agents first extract independently and then refine after seeing each
//! other's answers ([`exchange`]); a designated reflector then iterates on the
//! pooled answers until it signals completion, repeats itself, or hits the
//! iteration cap ([`reflect`]).

mod agent;
mod exr;
mod remote;
mod rule;

pub use agent::{
    Agent, AgentError, AgentReply, AgentRequest, AgentResponse, ScriptedAgent, Task,
};
pub use exr::{agent_extract, exchange, reflect, Exchange, Reflection};
pub use remote::RemoteAgent;
pub use rule::RuleAgent;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::par;
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub event_id: String,
    pub doc_id: String,
    pub trigger: String,
    pub mention: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    Causal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventRelation {
    pub doc_id: String,
    pub head_event_id: String,
    pub tail_event_id: String,
    pub relation: RelationKind,
}

/// An event as proposed by an agent, before numbering.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventCandidate {
    pub trigger: String,
    pub mention: String,
}

/// A relation as proposed by an agent; endpoints are event ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationCandidate {
    pub head: String,
    pub tail: String,
    #[serde(default = "causal")]
    pub relation: RelationKind,
}

fn causal() -> RelationKind {
    RelationKind::Causal
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Events(Vec<EventCandidate>),
    Relations(Vec<RelationCandidate>),
}

impl Payload {
    pub fn task(&self) -> Task {
        match self {
            Payload::Events(_) => Task::Events,
            Payload::Relations(_) => Task::Relations,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::Events(v) => v.len(),
            Payload::Relations(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trims fields, drops empty or self-referential entries and removes
    /// duplicates, keeping first occurrences. Events are keyed by lowercased
    /// (trigger, mention); relations by the full triple.
    pub fn normalized(&self) -> Payload {
        match self {
            Payload::Events(events) => {
                let mut seen = HashSet::new();
                Payload::Events(
                    events
                        .iter()
                        .map(|e| EventCandidate {
                            trigger: e.trigger.trim().to_string(),
                            mention: e.mention.split_whitespace().collect::<Vec<_>>().join(" "),
                        })
                        .filter(|e| !e.trigger.is_empty() && !e.mention.is_empty())
                        .filter(|e| seen.insert((e.trigger.to_lowercase(), e.mention.to_lowercase())))
                        .collect(),
                )
            }
            Payload::Relations(rels) => {
                let mut seen = HashSet::new();
                Payload::Relations(
                    rels.iter()
                        .map(|r| RelationCandidate {
                            head: r.head.trim().to_string(),
                            tail: r.tail.trim().to_string(),
                            relation: r.relation,
                        })
                        .filter(|r| !r.head.is_empty() && r.head != r.tail)
                        .filter(|r| seen.insert(r.clone()))
                        .collect(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExrConfig {
    pub exchange_rounds: usize,
    pub max_reflect_iters: usize,
    pub reflector_agent_id: String,
}

impl ExrConfig {
    pub fn validate(&self, agents: &[&dyn Agent]) -> Result<(), ExtractionError> {
        if self.exchange_rounds < 1 {
            return Err(ExtractionError::Config("exchange_rounds must be >= 1".into()));
        }
        if self.max_reflect_iters < 1 {
            return Err(ExtractionError::Config("max_reflect_iters must be >= 1".into()));
        }
        if !agents.iter().any(|a| a.id() == self.reflector_agent_id) {
            return Err(ExtractionError::Config(format!(
                "reflector `{}` is not a configured agent",
                self.reflector_agent_id
            )));
        }
        Ok(())
    }
}

/// Everything extracted from one document, plus the full agent transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub doc_id: String,
    pub events: Vec<Event>,
    pub relations: Vec<EventRelation>,
    pub transcript: Vec<AgentResponse>,
}

impl ExtractionRecord {
    pub fn event(&self, event_id: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.event_id == event_id)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error(transparent)]
    AgentUnavailable(#[from] AgentError),
    #[error("extraction failed for `{doc_id}`: {reason}")]
    ExtractionFailed { doc_id: String, reason: String },
    #[error("invalid extraction config: {0}")]
    Config(String),
}

/// The pseudo-event used when no agent produced anything: first
/// non-stopword token as trigger, first sentence as mention.
pub fn fallback_event(doc: &Document) -> Event {
    let first_sentence = text::sentences(&doc.text)
        .into_iter()
        .next()
        .unwrap_or_else(|| doc.text.trim().to_string());
    let toks = text::tokens(&doc.text);
    let trigger = toks
        .iter()
        .find(|t| !text::is_stopword(t))
        .or_else(|| toks.first())
        .cloned()
        .unwrap_or_else(|| doc.doc_id.clone());
    Event {
        event_id: "e1".into(),
        doc_id: doc.doc_id.clone(),
        trigger,
        mention: first_sentence,
    }
}

/// Runs event extraction followed by relation extraction on one document.
pub fn extract_document(
    doc: &Document,
    agents: &[&dyn Agent],
    config: &ExrConfig,
) -> Result<ExtractionRecord, ExtractionError> {
    config.validate(agents)?;
    let mut transcript = Vec::new();

    let ex = exchange(doc, agents, config.exchange_rounds, Task::Events, &[])?;
    transcript.extend(ex.transcript);
    let refl = reflect(doc, &ex.final_responses, config, agents, Task::Events, &[])?;
    transcript.extend(refl.transcript);

    let mut events: Vec<Event> = match refl.payload {
        Payload::Events(cands) => cands
            .into_iter()
            .enumerate()
            .map(|(i, c)| Event {
                event_id: format!("e{}", i + 1),
                doc_id: doc.doc_id.clone(),
                trigger: c.trigger,
                mention: c.mention,
            })
            .collect(),
        Payload::Relations(_) => unreachable!("reflect returns the requested task"),
    };
    if events.is_empty() {
        log::warn!("{}: no events extracted, using fallback pseudo-event", doc.doc_id);
        events.push(fallback_event(doc));
    }

    let ex = exchange(doc, agents, config.exchange_rounds, Task::Relations, &events)?;
    transcript.extend(ex.transcript);
    let refl = reflect(doc, &ex.final_responses, config, agents, Task::Relations, &events)?;
    transcript.extend(refl.transcript);

    let known: HashSet<&str> = events.iter().map(|e| e.event_id.as_str()).collect();
    let relations = match refl.payload {
        Payload::Relations(cands) => cands
            .into_iter()
            .filter(|r| {
                let ok = known.contains(r.head.as_str()) && known.contains(r.tail.as_str());
                if !ok {
                    log::warn!(
                        "{}: dropping relation {} -> {} with unknown endpoint",
                        doc.doc_id,
                        r.head,
                        r.tail
                    );
                }
                ok
            })
            .map(|r| EventRelation {
                doc_id: doc.doc_id.clone(),
                head_event_id: r.head,
                tail_event_id: r.tail,
                relation: r.relation,
            })
            .collect(),
        Payload::Events(_) => unreachable!("reflect returns the requested task"),
    };

    Ok(ExtractionRecord { doc_id: doc.doc_id.clone(), events, relations, transcript })
}

/// Extracts every document of the corpus, in corpus order.
pub fn extract_corpus(
    corpus: &Corpus,
    agents: &[&dyn Agent],
    config: &ExrConfig,
) -> Result<Vec<ExtractionRecord>, ExtractionError> {
    config.validate(agents)?;
    par::map(corpus.documents(), |doc| extract_document(doc, agents, config))
        .into_iter()
        .collect()
}
