//! Deterministic offline extractor.
//!
//! Events: one per sentence. The trigger is the first token of length >= 3
//! that is not a stopword; the mention is the sentence with bracketed asides
//! removed. Relations: adjacent events whose later sentence opens with a
//! causal cue, directed cause -> effect.

use std::collections::HashSet;

use super::agent::{Agent, AgentError, AgentReply, AgentRequest, Task};
use super::{EventCandidate, Payload, RelationCandidate, RelationKind};
use crate::text::{self, Cue};

#[derive(Debug, Clone)]
pub struct RuleAgent {
    id: String,
}

impl RuleAgent {
    pub fn new(id: impl Into<String>) -> Self {
        RuleAgent { id: id.into() }
    }

    pub fn extract_events(text: &str) -> Vec<EventCandidate> {
        text::sentences(text)
            .iter()
            .filter_map(|s| {
                let mention = text::remove_asides(s);
                let trigger = text::trigger_candidate(&mention)?;
                Some(EventCandidate { trigger, mention })
            })
            .collect()
    }

    fn events_reply(request: &AgentRequest<'_>) -> Vec<EventCandidate> {
        let mut out = Self::extract_events(&request.document.text);
        let doc_lower = request.document.text.to_lowercase();
        // keep peer suggestions whose trigger is grounded in the document
        for peer in request.peer_responses {
            if let Payload::Events(events) = &peer.payload {
                out.extend(
                    events
                        .iter()
                        .filter(|e| {
                            !e.trigger.trim().is_empty()
                                && doc_lower.contains(&e.trigger.to_lowercase())
                        })
                        .cloned(),
                );
            }
        }
        out
    }

    fn relations_reply(request: &AgentRequest<'_>) -> Vec<RelationCandidate> {
        let events = request.prior_events;
        let mut out = Vec::new();
        for pair in events.windows(2) {
            let (earlier, later) = (&pair[0], &pair[1]);
            let (head, tail) = match text::leading_cue(&later.mention) {
                Some(Cue::Forward) => (earlier, later),
                Some(Cue::Backward) => (later, earlier),
                None => continue,
            };
            out.push(RelationCandidate {
                head: head.event_id.clone(),
                tail: tail.event_id.clone(),
                relation: RelationKind::Causal,
            });
        }
        let known: HashSet<&str> = events.iter().map(|e| e.event_id.as_str()).collect();
        for peer in request.peer_responses {
            if let Payload::Relations(rels) = &peer.payload {
                out.extend(
                    rels.iter()
                        .filter(|r| known.contains(r.head.as_str()) && known.contains(r.tail.as_str()))
                        .cloned(),
                );
            }
        }
        out
    }
}

impl Agent for RuleAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(&self, request: &AgentRequest<'_>) -> Result<AgentReply, AgentError> {
        Ok(match request.task {
            Task::Events => AgentReply::events(Self::events_reply(request)),
            Task::Relations => AgentReply::relations(Self::relations_reply(request)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::extraction::Event;

    fn doc(text: &str) -> Document {
        Document { doc_id: "d".into(), title: None, text: text.into() }
    }

    #[test]
    fn one_event_per_sentence() {
        // Worked by hand: "Storms" is the first token of length >= 3 that is
        // not a stopword; "So" and "the" are skipped in the second sentence.
        let d = doc("Storms (very strong ones) hit the coast. So the harbor flooded.");
        let req = AgentRequest { task: Task::Events, document: &d, prior_events: &[], peer_responses: &[] };
        let reply = RuleAgent::new("rule").respond(&req).unwrap();
        assert_eq!(
            reply.payload,
            Payload::Events(vec![
                EventCandidate { trigger: "Storms".into(), mention: "Storms hit the coast.".into() },
                EventCandidate { trigger: "harbor".into(), mention: "So the harbor flooded.".into() },
            ])
        );
    }

    fn ev(id: &str, mention: &str) -> Event {
        Event { event_id: id.into(), doc_id: "d".into(), trigger: "x".into(), mention: mention.into() }
    }

    #[test]
    fn cue_words_direct_relations() {
        let d = doc("unused");
        let events = vec![
            ev("e1", "The dam broke."),
            ev("e2", "Therefore the valley flooded."),
            ev("e3", "Farmers left."),
            ev("e4", "Because the soil was ruined."),
        ];
        let req = AgentRequest { task: Task::Relations, document: &d, prior_events: &events, peer_responses: &[] };
        let reply = RuleAgent::new("rule").respond(&req).unwrap();
        let Payload::Relations(rels) = reply.payload else { panic!() };
        let pairs: Vec<(&str, &str)> = rels.iter().map(|r| (r.head.as_str(), r.tail.as_str())).collect();
        assert_eq!(pairs, vec![("e1", "e2"), ("e4", "e3")]);
    }

    #[test]
    fn deterministic() {
        let d = doc("A cat sat. Then a dog barked loudly! Why?");
        let req = AgentRequest { task: Task::Events, document: &d, prior_events: &[], peer_responses: &[] };
        let a = RuleAgent::new("r").respond(&req).unwrap();
        let b = RuleAgent::new("r").respond(&req).unwrap();
        assert_eq!(a, b);
    }
}
