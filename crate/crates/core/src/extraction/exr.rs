use std::collections::BTreeMap;

use super::agent::{Agent, AgentError, AgentRequest, AgentResponse, Task};
use super::{Event, ExrConfig, ExtractionError, Payload};
use crate::corpus::Document;
use crate::par;

/// Asks one agent for a candidate set. `peers` empty means independent
/// extraction (round 0). The returned payload is normalized.
pub fn agent_extract(
    agent: &dyn Agent,
    doc: &Document,
    task: Task,
    prior_events: &[Event],
    peers: &[AgentResponse],
    round: usize,
) -> Result<AgentResponse, AgentError> {
    let request = AgentRequest { task, document: doc, prior_events, peer_responses: peers };
    let reply = agent.respond(&request)?;
    if reply.payload.task() != task {
        return Err(AgentError::Malformed {
            agent_id: agent.id().to_string(),
            reason: format!("expected {task:?} payload"),
        });
    }
    Ok(AgentResponse { agent_id: agent.id().to_string(), round, payload: reply.payload.normalized() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    /// Latest response of every agent that answered at least once, sorted by
    /// agent id.
    pub final_responses: Vec<AgentResponse>,
    /// Every successful response of every round.
    pub transcript: Vec<AgentResponse>,
}

/// Round 0 runs every agent independently. Each of the following `rounds`
/// rounds shows every agent the other agents' latest answers and collects
/// the refinements. An agent that fails keeps its previous answer.
pub fn exchange(
    doc: &Document,
    agents: &[&dyn Agent],
    rounds: usize,
    task: Task,
    prior_events: &[Event],
) -> Result<Exchange, ExtractionError> {
    if agents.is_empty() {
        return Err(ExtractionError::Config("exchange needs at least one agent".into()));
    }
    let mut latest: BTreeMap<String, AgentResponse> = BTreeMap::new();
    let mut transcript = Vec::new();

    for round in 0..=rounds {
        let snapshot: Vec<AgentResponse> = latest.values().cloned().collect();
        let results = par::map(agents, |agent| {
            let peers: Vec<AgentResponse> = if round == 0 {
                Vec::new()
            } else {
                snapshot.iter().filter(|r| r.agent_id != agent.id()).cloned().collect()
            };
            agent_extract(*agent, doc, task, prior_events, &peers, round)
        });
        let mut answered = 0;
        let mut ok: Vec<AgentResponse> = Vec::new();
        for result in results {
            match result {
                Ok(resp) => {
                    answered += 1;
                    ok.push(resp);
                }
                Err(e) => log::warn!("{}: round {round}: {e}", doc.doc_id),
            }
        }
        if answered == 0 {
            return Err(ExtractionError::ExtractionFailed {
                doc_id: doc.doc_id.clone(),
                reason: format!("all agents unavailable in exchange round {round}"),
            });
        }
        ok.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
        for resp in ok {
            transcript.push(resp.clone());
            latest.insert(resp.agent_id.clone(), resp);
        }
    }
    Ok(Exchange { final_responses: latest.into_values().collect(), transcript })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    pub payload: Payload,
    /// Reflector invocations performed, failed ones included.
    pub iterations: usize,
    pub transcript: Vec<AgentResponse>,
}

/// Lets the reflector refine the pooled insights. Stops when it signals
/// done, when two consecutive answers are identical, or after
/// `max_reflect_iters` invocations; the last answer wins.
pub fn reflect(
    doc: &Document,
    insights: &[AgentResponse],
    config: &ExrConfig,
    agents: &[&dyn Agent],
    task: Task,
    prior_events: &[Event],
) -> Result<Reflection, ExtractionError> {
    if insights.is_empty() {
        return Err(ExtractionError::ExtractionFailed {
            doc_id: doc.doc_id.clone(),
            reason: "reflection needs at least one insight".into(),
        });
    }
    let reflector = agents
        .iter()
        .find(|a| a.id() == config.reflector_agent_id)
        .ok_or_else(|| {
            ExtractionError::Config(format!("unknown reflector `{}`", config.reflector_agent_id))
        })?;
    let base_round = insights.iter().map(|r| r.round).max().unwrap_or(0) + 1;

    let mut last: Option<Payload> = None;
    let mut transcript = Vec::new();
    let mut iterations = 0;
    for i in 0..config.max_reflect_iters {
        iterations += 1;
        let mut context = insights.to_vec();
        if let Some(prev) = &last {
            context.push(AgentResponse {
                agent_id: reflector.id().to_string(),
                round: base_round + i - 1,
                payload: prev.clone(),
            });
        }
        let request = AgentRequest { task, document: doc, prior_events, peer_responses: &context };
        let reply = match reflector.respond(&request) {
            Ok(r) if r.payload.task() == task => r,
            Ok(_) => {
                log::warn!("{}: reflector returned the wrong payload kind", doc.doc_id);
                continue;
            }
            Err(e) => {
                log::warn!("{}: reflection iteration {}: {e}", doc.doc_id, i + 1);
                continue;
            }
        };
        let payload = reply.payload.normalized();
        transcript.push(AgentResponse {
            agent_id: reflector.id().to_string(),
            round: base_round + i,
            payload: payload.clone(),
        });
        let repeated = last.as_ref() == Some(&payload);
        last = Some(payload);
        if reply.done || repeated {
            break;
        }
    }
    match last {
        Some(payload) => Ok(Reflection { payload, iterations, transcript }),
        None => Err(ExtractionError::ExtractionFailed {
            doc_id: doc.doc_id.clone(),
            reason: "reflector unavailable on every attempt".into(),
        }),
    }
}
