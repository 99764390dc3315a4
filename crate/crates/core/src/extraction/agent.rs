//! The agent abstraction shared by rule-based, scripted and remote extractors.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{Event, EventCandidate, Payload, RelationCandidate};
use crate::corpus::Document;
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Events,
    Relations,
}

/// One candidate set produced by one agent in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub agent_id: String,
    pub round: usize,
    pub payload: Payload,
}

/// Everything an agent sees when asked to extract or refine.
#[derive(Debug, Clone, Copy)]
pub struct AgentRequest<'a> {
    pub task: Task,
    pub document: &'a Document,
    /// Numbered events of the document; empty during event extraction.
    pub prior_events: &'a [Event],
    /// Latest responses of the other agents (or the insights during
    /// reflection). Empty for independent extraction.
    pub peer_responses: &'a [AgentResponse],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentReply {
    pub payload: Payload,
    /// Set by an agent that considers its answer final.
    pub done: bool,
}

impl AgentReply {
    pub fn events(events: Vec<EventCandidate>) -> Self {
        AgentReply { payload: Payload::Events(events), done: false }
    }

    pub fn relations(relations: Vec<RelationCandidate>) -> Self {
        AgentReply { payload: Payload::Relations(relations), done: false }
    }

    pub fn with_done(mut self, done: bool) -> Self {
        self.done = done;
        self
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum AgentError {
    #[error("agent `{agent_id}` unavailable: {reason}")]
    Unavailable { agent_id: String, reason: String },
    #[error("agent `{agent_id}` returned malformed output: {reason}")]
    Malformed { agent_id: String, reason: String },
}

pub trait Agent: Send + Sync {
    fn id(&self) -> &str;

    fn respond(&self, request: &AgentRequest<'_>) -> Result<AgentReply, AgentError>;
}

type ScriptFn = dyn Fn(&AgentRequest<'_>, usize) -> Result<AgentReply, AgentError> + Send + Sync;

/// An agent driven by a closure. The closure also receives the 0-based
/// invocation count, which makes iteration-dependent scripts easy to write.
pub struct ScriptedAgent {
    id: String,
    script: Box<ScriptFn>,
    calls: AtomicUsize,
}

impl ScriptedAgent {
    pub fn from_fn<F>(id: impl Into<String>, script: F) -> Self
    where
        F: Fn(&AgentRequest<'_>, usize) -> Result<AgentReply, AgentError> + Send + Sync + 'static,
    {
        ScriptedAgent { id: id.into(), script: Box::new(script), calls: AtomicUsize::new(0) }
    }

    /// Always answers the same events for event tasks and the same relations
    /// for relation tasks.
    pub fn constant(
        id: impl Into<String>,
        events: Vec<EventCandidate>,
        relations: Vec<RelationCandidate>,
    ) -> Self {
        Self::from_fn(id, move |req, _| {
            Ok(match req.task {
                Task::Events => AgentReply::events(events.clone()),
                Task::Relations => AgentReply::relations(relations.clone()),
            })
        })
    }

    /// Per-document constant answers loaded from a line-delimited file of
    /// `{doc_id, events: [{trigger, mention}], relations: [{head, tail, relation}]}`.
    /// Documents missing from the file get empty answers.
    pub fn from_script_file(id: impl Into<String>, path: &Path) -> Result<Self, jsonl::JsonlError> {
        #[derive(Deserialize)]
        struct Line {
            doc_id: String,
            #[serde(default)]
            events: Vec<EventCandidate>,
            #[serde(default)]
            relations: Vec<RelationCandidate>,
        }
        let table: HashMap<String, (Vec<EventCandidate>, Vec<RelationCandidate>)> =
            jsonl::read_records::<Line>(path)?
                .into_iter()
                .map(|l| (l.doc_id, (l.events, l.relations)))
                .collect();
        Ok(Self::from_fn(id, move |req, _| {
            let (events, relations) =
                table.get(&req.document.doc_id).cloned().unwrap_or_default();
            Ok(match req.task {
                Task::Events => AgentReply::events(events),
                Task::Relations => AgentReply::relations(relations),
            })
        }))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Agent for ScriptedAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(&self, request: &AgentRequest<'_>) -> Result<AgentReply, AgentError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(request, n)
    }
}

impl std::fmt::Debug for ScriptedAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedAgent").field("id", &self.id).field("calls", &self.calls()).finish()
    }
}
