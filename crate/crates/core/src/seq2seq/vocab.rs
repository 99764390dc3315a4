use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::identifiers::{IdentifierIndex, SENTINEL};
use crate::representation::TrainingUnit;
use crate::text;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
/// Doubles as the end-of-identifier sentinel on the output side.
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", SENTINEL, "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq)]
struct Table {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Table {
    fn new<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut all: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut ids: HashMap<String, TokenId> =
            all.iter().enumerate().map(|(i, t)| (t.clone(), i as TokenId)).collect();
        for t in tokens {
            if !ids.contains_key(&t) {
                ids.insert(t.clone(), all.len() as TokenId);
                all.push(t);
            }
        }
        Table { tokens: all, ids }
    }
}

/// Input and identifier vocabularies. Both reserve ids 0-3 for
/// PAD, BOS, EOS and UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    input: Table,
    identifier: Table,
}

#[derive(Debug, thiserror::Error)]
#[error("identifier token `{0}` is not in the vocabulary")]
pub struct UnknownIdentifierToken(pub String);

impl Vocab {
    /// Input side: every token of every unit text. Identifier side: exactly
    /// the index vocabulary.
    pub fn build(units: &[TrainingUnit], index: &IdentifierIndex) -> Self {
        let input: BTreeSet<String> = units.iter().flat_map(|u| text::model_tokens(&u.input_text)).collect();
        Vocab::from_tokens(input, index.vocabulary().iter().cloned())
    }

    pub fn from_tokens<I, J>(input: I, identifier: J) -> Self
    where
        I: IntoIterator<Item = String>,
        J: IntoIterator<Item = String>,
    {
        Vocab { input: Table::new(input), identifier: Table::new(identifier) }
    }

    pub fn input_len(&self) -> usize {
        self.input.tokens.len()
    }

    pub fn identifier_len(&self) -> usize {
        self.identifier.tokens.len()
    }

    /// Identifier tokens that can actually be emitted: the index vocabulary
    /// plus the sentinel.
    pub fn identifier_token_count(&self) -> usize {
        self.identifier.tokens.len() - SPECIALS.len() + 1
    }

    pub fn input_id(&self, token: &str) -> TokenId {
        self.input.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn input_token(&self, id: TokenId) -> Option<&str> {
        self.input.tokens.get(id as usize).map(String::as_str)
    }

    pub fn identifier_id(&self, token: &str) -> Option<TokenId> {
        self.identifier.ids.get(token).copied()
    }

    pub fn identifier_token(&self, id: TokenId) -> Option<&str> {
        self.identifier.tokens.get(id as usize).map(String::as_str)
    }

    /// Tokenizes, lowercases and maps to ids; unknown words become UNK.
    /// Truncated to `max_len`; empty input becomes a single UNK.
    pub fn encode_input(&self, text: &str, max_len: usize) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> =
            text::model_tokens(text).iter().take(max_len.max(1)).map(|t| self.input_id(t)).collect();
        if ids.is_empty() {
            ids.push(UNK);
        }
        ids
    }

    /// Maps identifier tokens to ids and appends the sentinel.
    pub fn encode_identifier(&self, tokens: &[String]) -> Result<Vec<TokenId>, UnknownIdentifierToken> {
        let mut out = tokens
            .iter()
            .map(|t| self.identifier_id(t).ok_or_else(|| UnknownIdentifierToken(t.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(EOS);
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    input: Vec<String>,
    identifier: Vec<String>,
}

impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VocabRepr {
            input: self.input.tokens[SPECIALS.len()..].to_vec(),
            identifier: self.identifier.tokens[SPECIALS.len()..].to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = VocabRepr::deserialize(d)?;
        Ok(Vocab::from_tokens(r.input, r.identifier))
    }
}
