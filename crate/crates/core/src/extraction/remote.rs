//! Chat-style HTTP agent. The endpoint receives
//! `{task, document, prior_events?, peer_responses?, model?}` and must answer
//! `{events: [{trigger, mention}], relations: [{head, tail, relation}], done}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::agent::{Agent, AgentError, AgentReply, AgentRequest, AgentResponse, Task};
use super::{Event, EventCandidate, Payload, RelationCandidate};
use crate::corpus::Document;

#[derive(Debug, Clone)]
pub struct RemoteAgent {
    id: String,
    url: String,
    api_key: Option<String>,
    model_name: Option<String>,
    http: ureq::Agent,
}

#[derive(Serialize)]
struct RequestBody<'a> {
    task: Task,
    document: &'a Document,
    #[serde(skip_serializing_if = "<[Event]>::is_empty")]
    prior_events: &'a [Event],
    #[serde(skip_serializing_if = "<[AgentResponse]>::is_empty")]
    peer_responses: &'a [AgentResponse],
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseBody {
    #[serde(default)]
    events: Vec<EventCandidate>,
    #[serde(default)]
    relations: Vec<RelationCandidate>,
    done: bool,
}

impl RemoteAgent {
    /// `api_key` is the credential itself; callers resolve it from the
    /// environment variable named in the configuration.
    pub fn new(
        id: impl Into<String>,
        url: impl Into<String>,
        api_key: Option<String>,
        model_name: Option<String>,
        timeout: Duration,
    ) -> Self {
        let http = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        RemoteAgent { id: id.into(), url: url.into(), api_key, model_name, http }
    }
}

impl Agent for RemoteAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(&self, request: &AgentRequest<'_>) -> Result<AgentReply, AgentError> {
        let body = RequestBody {
            task: request.task,
            document: request.document,
            prior_events: request.prior_events,
            peer_responses: request.peer_responses,
            model: self.model_name.as_deref(),
        };
        let mut call = self.http.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(&body).map_err(|e| AgentError::Unavailable {
            agent_id: self.id.clone(),
            reason: e.to_string(),
        })?;
        let raw = response.body_mut().read_to_string().map_err(|e| AgentError::Unavailable {
            agent_id: self.id.clone(),
            reason: e.to_string(),
        })?;
        let parsed: ResponseBody = serde_json::from_str(&raw).map_err(|e| AgentError::Malformed {
            agent_id: self.id.clone(),
            reason: e.to_string(),
        })?;
        let payload = match request.task {
            Task::Events => Payload::Events(parsed.events),
            Task::Relations => Payload::Relations(parsed.relations),
        };
        Ok(AgentReply { payload, done: parsed.done })
    }
}
