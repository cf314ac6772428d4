use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{require_nonempty, TokenSeq};
use crate::autodiff::{concat, stack, Binder, ParamStore, Var};
use crate::kg::EmbeddingTable;
use crate::nn::{BiLstm, Linear};
use crate::{Error, Result};

/// Where the auxiliary feature vector `v_f` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum FeatureMode {
    Zeros { dim: usize },
    /// Taken from [`MentionInput::features`].
    Supplied { dim: usize },
    /// Mean of learned embeddings of [`MentionInput::feature_ids`].
    Learned { vocab: usize, dim: usize },
}

impl FeatureMode {
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::Zeros { dim } | FeatureMode::Supplied { dim } | FeatureMode::Learned { dim, .. } => dim,
        }
    }
}

impl Default for FeatureMode {
    fn default() -> Self {
        FeatureMode::Zeros { dim: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionInput {
    pub mention: TokenSeq,
    pub left: TokenSeq,
    pub right: TokenSeq,
    #[serde(default)]
    pub features: Option<Vec<f64>>,
    #[serde(default)]
    pub feature_ids: Vec<usize>,
}

impl MentionInput {
    /// Keeps the `window` context tokens closest to the mention on each side.
    pub fn new<S: AsRef<str>>(mention: &[S], left: &[S], right: &[S], window: usize) -> Self {
        let left = &left[left.len().saturating_sub(window)..];
        let right = &right[..right.len().min(window)];
        Self {
            mention: TokenSeq::new(mention),
            left: TokenSeq::new(left),
            right: TokenSeq::new(right),
            features: None,
            feature_ids: Vec::new(),
        }
    }
}

/// Mention encoder: averaged mention embeddings, attention over biLSTM
/// context states, and an auxiliary feature vector, concatenated as
/// `[v_c; v_f; v_m]`.
///
/// Context attention scores are normalized by their plain sum over both
/// sides, not by a softmax, so individual weights may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentiveNer {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
    pub attention: usize,
    pub features: FeatureMode,
}

impl AttentiveNer {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize, attention: usize, features: FeatureMode) -> Self {
        Self {
            prefix: prefix.into(),
            input,
            hidden,
            attention,
            features,
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.hidden + self.features.dim() + self.input
    }

    /// One biLSTM shared by both contexts.
    fn bilstm(&self) -> BiLstm {
        BiLstm::new(&format!("{}.lstm", self.prefix), self.input, self.hidden)
    }

    fn w_e(&self) -> Linear {
        Linear::new(format!("{}.w_e", self.prefix), 2 * self.hidden, self.attention, false)
    }

    fn w_alpha(&self) -> Linear {
        Linear::new(format!("{}.w_alpha", self.prefix), self.attention, 1, false)
    }

    fn feat_name(&self) -> String {
        format!("{}.feat_emb", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.bilstm().init(store, rng);
        self.w_e().init(store, rng);
        self.w_alpha().init(store, rng);
        if let FeatureMode::Learned { vocab, dim } = self.features {
            store.glorot(self.feat_name(), vocab, dim, rng);
        }
    }

    /// Context attention weights (left then right) and the matching states.
    pub fn attention<'t>(&self, b: &Binder<'t, '_>, emb: &EmbeddingTable, x: &MentionInput) -> Result<(Var<'t>, Var<'t>)> {
        if x.left.is_empty() && x.right.is_empty() {
            return Err(Error::Contract("mention has neither left nor right context".into()));
        }
        let lstm = self.bilstm();
        let mut states = Vec::new();
        for ctx in [&x.left, &x.right] {
            if !ctx.is_empty() {
                states.extend(lstm.run(b, &ctx.vectors(b, emb))?);
            }
        }
        let h = stack(&states)?;
        let alpha = self
            .w_alpha()
            .forward_rows(b, self.w_e().forward_rows(b, h)?.tanh())?
            .transpose()?
            .row(0)?;
        let weights = alpha.scale_by(alpha.sum_all().recip()?)?;
        Ok((weights, h))
    }

    fn feature_vector<'t>(&self, b: &Binder<'t, '_>, x: &MentionInput) -> Result<Var<'t>> {
        match self.features {
            FeatureMode::Zeros { dim } => Ok(b.vector(&vec![0.0; dim])),
            FeatureMode::Supplied { dim } => {
                let f = x
                    .features
                    .as_ref()
                    .ok_or_else(|| Error::Data("mention has no supplied feature vector".into()))?;
                if f.len() != dim {
                    return Err(Error::shape("mention features", format!("expected {dim}, got {}", f.len())));
                }
                Ok(b.vector(f))
            }
            FeatureMode::Learned { vocab, dim } => {
                if x.feature_ids.is_empty() {
                    return Ok(b.vector(&vec![0.0; dim]));
                }
                let table = b.param(&self.feat_name())?;
                let rows = x
                    .feature_ids
                    .iter()
                    .map(|&i| {
                        if i >= vocab {
                            return Err(Error::Data(format!("feature id {i} outside vocabulary of {vocab}")));
                        }
                        table.row(i)
                    })
                    .collect::<Result<Vec<_>>>()?;
                stack(&rows)?.mean(Some(0))
            }
        }
    }

    pub fn encode<'t>(&self, b: &Binder<'t, '_>, emb: &EmbeddingTable, x: &MentionInput) -> Result<Var<'t>> {
        require_nonempty(&x.mention, "mention")?;
        let v_m = stack(&x.mention.vectors(b, emb))?.mean(Some(0))?;
        let (weights, h) = self.attention(b, emb, x)?;
        let v_c = weights.matmul(h)?;
        concat(&[v_c, self.feature_vector(b, x)?, v_m], 0)
    }
}
