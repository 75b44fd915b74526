use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::text::tokenize;

pub type TokenId = usize;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const PAD: TokenId = 2;

const SPECIALS: [&str; 3] = ["<bos>", "<eos>", "<pad>"];

/// Token/id bijection with the three reserved ids first; words follow in
/// sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyVocab {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl ToyVocab {
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let words: BTreeSet<String> = texts.iter().flat_map(|t| tokenize(t.as_ref())).collect();
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().filter(|w| !SPECIALS.contains(&w.as_str())))
            .collect();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// `[BOS, w1, .., wk, EOS]` for the normalised text.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut out = vec![BOS];
        for w in tokenize(text) {
            out.push(self.id(&w).ok_or_else(|| Error::Invalid(format!("token {w:?} not in vocabulary")))?);
        }
        out.push(EOS);
        Ok(out)
    }

    /// Words for ids, skipping the reserved tokens.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&i| i > PAD)
            .filter_map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
