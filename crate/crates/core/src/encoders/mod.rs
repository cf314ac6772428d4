//! Example encoders θ(x).
//!
//! [`BiLstmAttention`] encodes a sentence; [`AttentiveNer`] encodes an entity
//! mention with its left and right context. Both read token vectors from a
//! fixed [`EmbeddingTable`](crate::kg::EmbeddingTable) and ignore any tokens
//! past an explicit length, so padded and unpadded inputs encode the same.

mod mention;
mod sentence;

use serde::{Deserialize, Serialize};

pub use mention::{AttentiveNer, FeatureMode, MentionInput};
pub use sentence::BiLstmAttention;

use crate::autodiff::{Binder, Var};
use crate::kg::EmbeddingTable;
use crate::{Error, Result};

/// Tokens of which only the first `len` are real; the rest is padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    pub len: usize,
}

impl TokenSeq {
    pub fn new<S: AsRef<str>>(tokens: &[S]) -> Self {
        let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        Self {
            len: tokens.len(),
            tokens,
        }
    }

    /// Right-pads with `pad` up to `width` tokens, keeping the real length.
    pub fn padded(mut self, width: usize, pad: &str) -> Self {
        while self.tokens.len() < width {
            self.tokens.push(pad.to_string());
        }
        self
    }

    pub fn real(&self) -> &[String] {
        &self.tokens[..self.len.min(self.tokens.len())]
    }

    pub fn is_empty(&self) -> bool {
        self.real().is_empty()
    }

    pub(crate) fn vectors<'t>(&self, b: &Binder<'t, '_>, emb: &EmbeddingTable) -> Vec<Var<'t>> {
        self.real().iter().map(|t| b.vector(&emb.vector(t))).collect()
    }
}

pub type SentenceInput = TokenSeq;

fn require_nonempty(seq: &TokenSeq, what: &str) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::Contract(format!("{what} has no tokens")));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
