//! Event-centric generative document retrieval.
//!
//! Documents are reduced to extracted events and causal relations, given
//! structured identifiers, and memorized by a small encoder-decoder that is
//! later queried through trie-constrained beam search.

pub mod corpus;
pub mod extraction;
pub mod identifiers;
pub mod jsonl;
pub mod par;
pub mod pipeline;
pub mod representation;
pub mod retrieval;
pub mod seq2seq;
pub mod synthetic;
pub mod taxonomy;
pub mod text;
