//! Training units: the (input text, target document) pairs the model learns
//! from. Event mentions, direction-ordered relation pairs and labeled
//! queries all share one form and are weighted equally.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::extraction::ExtractionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitTask {
    IndexEvent,
    IndexRelation,
    RetrievalQuery,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingUnit {
    pub input_text: String,
    pub doc_id: String,
    pub task: UnitTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RepresentationMode {
    /// Event mentions only.
    EReps,
    /// Event mentions plus one unit per relation.
    ERReps,
}

impl std::str::FromStr for RepresentationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "EReps" => Ok(RepresentationMode::EReps),
            "ERReps" => Ok(RepresentationMode::ERReps),
            other => Err(format!("unknown representation mode `{other}` (expected EReps or ERReps)")),
        }
    }
}

impl std::fmt::Display for RepresentationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RepresentationMode::EReps => "EReps",
            RepresentationMode::ERReps => "ERReps",
        })
    }
}

pub const DEFAULT_RELATION_SEPARATOR: &str = "[CAUSES]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentationConfig {
    pub mode: RepresentationMode,
    #[serde(default = "default_separator")]
    pub relation_separator: String,
}

fn default_separator() -> String {
    DEFAULT_RELATION_SEPARATOR.to_string()
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        RepresentationConfig { mode: RepresentationMode::ERReps, relation_separator: default_separator() }
    }
}

/// Doubles every occurrence of the separator's first character, so the
/// separator itself (with its single leading character) never appears inside
/// an escaped mention.
pub fn escape_mention(mention: &str, separator: &str) -> String {
    match separator.chars().next() {
        Some(first) => mention.replace(first, &format!("{first}{first}")),
        None => mention.to_string(),
    }
}

pub fn unescape_mention(escaped: &str, separator: &str) -> String {
    match separator.chars().next() {
        Some(first) => escaped.replace(&format!("{first}{first}"), &first.to_string()),
        None => escaped.to_string(),
    }
}

/// Splits a relation unit back into (head mention, tail mention).
pub fn split_relation_text(text: &str, separator: &str) -> Option<(String, String)> {
    let needle = format!(" {separator} ");
    let at = text.find(&needle)?;
    Some((
        unescape_mention(&text[..at], separator),
        unescape_mention(&text[at + needle.len()..], separator),
    ))
}

impl RepresentationConfig {
    /// The separator must be non-empty, must not start with whitespace and
    /// its first character must not repeat immediately (escaping relies on
    /// doubling that character).
    pub fn validate(&self) -> Result<(), String> {
        let mut chars = self.relation_separator.chars();
        match (chars.next(), chars.next()) {
            (None, _) => Err("relation separator must not be empty".into()),
            (Some(c), _) if c.is_whitespace() => Err("relation separator must not start with whitespace".into()),
            (Some(a), Some(b)) if a == b => Err("relation separator must not start with a doubled character".into()),
            _ if self.relation_separator.chars().any(char::is_whitespace) => {
                Err("relation separator must not contain whitespace".into())
            }
            _ => Ok(()),
        }
    }
}

/// One unit per event, in event order.
pub fn build_event_units(record: &ExtractionRecord) -> Vec<TrainingUnit> {
    record
        .events
        .iter()
        .map(|e| TrainingUnit {
            input_text: e.mention.clone(),
            doc_id: record.doc_id.clone(),
            task: UnitTask::IndexEvent,
        })
        .collect()
}

/// One unit per relation: head mention, separator, tail mention.
pub fn build_relation_units(record: &ExtractionRecord, config: &RepresentationConfig) -> Vec<TrainingUnit> {
    let sep = &config.relation_separator;
    record
        .relations
        .iter()
        .filter_map(|r| {
            let head = record.event(&r.head_event_id)?;
            let tail = record.event(&r.tail_event_id)?;
            Some(TrainingUnit {
                input_text: format!(
                    "{} {sep} {}",
                    escape_mention(&head.mention, sep),
                    escape_mention(&tail.mention, sep)
                ),
                doc_id: record.doc_id.clone(),
                task: UnitTask::IndexRelation,
            })
        })
        .collect()
}

pub fn build_units(record: &ExtractionRecord, config: &RepresentationConfig) -> Vec<TrainingUnit> {
    let mut units = build_event_units(record);
    if config.mode == RepresentationMode::ERReps {
        units.extend(build_relation_units(record, config));
    }
    units
}

pub fn build_query_units(corpus: &Corpus, split: Split) -> Vec<TrainingUnit> {
    corpus
        .queries_in(split)
        .map(|q| TrainingUnit {
            input_text: q.text.clone(),
            doc_id: q.gold_doc_id.clone(),
            task: UnitTask::RetrievalQuery,
        })
        .collect()
}
