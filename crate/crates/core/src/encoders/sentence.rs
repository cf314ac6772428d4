use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{require_nonempty, SentenceInput};
use crate::autodiff::{stack, Binder, ParamStore, Var};
use crate::kg::EmbeddingTable;
use crate::nn::{BiLstm, Linear};
use crate::Result;

/// BiLSTM whose states are pooled by a two-layer attention MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmAttention {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
    pub attention: usize,
}

impl BiLstmAttention {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize, attention: usize) -> Self {
        Self {
            prefix: prefix.into(),
            input,
            hidden,
            attention,
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.hidden
    }

    fn bilstm(&self) -> BiLstm {
        BiLstm::new(&format!("{}.lstm", self.prefix), self.input, self.hidden)
    }

    fn att_hidden(&self) -> Linear {
        Linear::new(format!("{}.att1", self.prefix), 2 * self.hidden, self.attention, true)
    }

    fn att_score(&self) -> Linear {
        Linear::new(format!("{}.att2", self.prefix), self.attention, 1, false)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.bilstm().init(store, rng);
        self.att_hidden().init(store, rng);
        self.att_score().init(store, rng);
    }

    /// Zeroes the LSTM weights, which makes every output zero.
    pub fn zero_lstm(&self, store: &mut ParamStore) {
        self.bilstm().init_zeros(store);
    }

    /// Attention weights over the real tokens.
    pub fn attention<'t>(&self, b: &Binder<'t, '_>, emb: &EmbeddingTable, x: &SentenceInput) -> Result<(Var<'t>, Var<'t>)> {
        require_nonempty(x, "sentence")?;
        let states = self.bilstm().run(b, &x.vectors(b, emb))?;
        let h = stack(&states)?;
        let scores = self
            .att_score()
            .forward_rows(b, self.att_hidden().forward_rows(b, h)?.tanh())?;
        let alpha = scores.transpose()?.row(0)?.softmax(0)?;
        Ok((alpha, h))
    }

    pub fn encode<'t>(&self, b: &Binder<'t, '_>, emb: &EmbeddingTable, x: &SentenceInput) -> Result<Var<'t>> {
        let (alpha, h) = self.attention(b, emb, x)?;
        alpha.matmul(h)
    }
}
