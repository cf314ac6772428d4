use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BilinearHead;
use crate::aggregators::{GnnStack, GraphContext};
use crate::autodiff::{Binder, ParamStore, Tape, Var};
use crate::encoders::{AttentiveNer, BiLstmAttention, MentionInput, TokenSeq};
use crate::kg::EmbeddingTable;
use crate::{Error, Result};

/// θ(x) for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleEncoder {
    /// The input already is θ(x), e.g. image features.
    Precomputed { dim: usize },
    Sentence(BiLstmAttention),
    Mention(AttentiveNer),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Vector(Vec<f64>),
    Sentence(TokenSeq),
    Mention(MentionInput),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub input: Input,
    pub labels: Vec<String>,
}

impl Example {
    pub fn new(input: Input, labels: &[&str]) -> Self {
        Self {
            input,
            labels: labels.iter().map(|l| l.to_string()).collect(),
        }
    }
}

impl ExampleEncoder {
    pub fn out_dim(&self) -> usize {
        match self {
            ExampleEncoder::Precomputed { dim } => *dim,
            ExampleEncoder::Sentence(e) => e.out_dim(),
            ExampleEncoder::Mention(e) => e.out_dim(),
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        match self {
            ExampleEncoder::Precomputed { .. } => {}
            ExampleEncoder::Sentence(e) => e.init(store, rng),
            ExampleEncoder::Mention(e) => e.init(store, rng),
        }
    }

    pub fn encode<'t>(&self, b: &Binder<'t, '_>, emb: Option<&EmbeddingTable>, x: &Input) -> Result<Var<'t>> {
        let table = || emb.ok_or_else(|| Error::Config("token encoder needs an embedding table".into()));
        match (self, x) {
            (ExampleEncoder::Precomputed { dim }, Input::Vector(v)) => {
                if v.len() != *dim {
                    return Err(Error::shape("example vector", format!("expected {dim}, got {}", v.len())));
                }
                Ok(b.vector(v))
            }
            (ExampleEncoder::Sentence(e), Input::Sentence(s)) => e.encode(b, table()?, s),
            (ExampleEncoder::Mention(e), Input::Mention(m)) => e.encode(b, table()?, m),
            _ => Err(Error::Data("example input does not match the encoder".into())),
        }
    }
}

/// Example encoder, class GNN and bilinear head trained jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct ZslModel {
    pub encoder: ExampleEncoder,
    pub gnn: GnnStack,
    pub head: BilinearHead,
}

impl ZslModel {
    pub fn new(encoder: ExampleEncoder, gnn: GnnStack, rank: usize) -> Self {
        let head = BilinearHead::new("head", encoder.out_dim(), gnn.out_dim(), rank);
        Self { encoder, gnn, head }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        self.encoder.init(store, rng);
        self.gnn.init(store, rng);
        self.head.init(store, rng);
    }

    /// Eval-mode class vectors keyed by class id.
    pub fn class_reps(
        &self,
        store: &ParamStore,
        ctx: &GraphContext<'_>,
        classes: &[String],
        seed: u64,
    ) -> Result<BTreeMap<String, Vec<f64>>> {
        let ids: Vec<&str> = classes.iter().map(String::as_str).collect();
        let reps = self.gnn.embed(store, ctx, &ids, seed)?;
        Ok(classes.iter().cloned().zip(reps).collect())
    }

    /// θ(x) for every example, in parallel.
    pub fn encode_all(&self, store: &ParamStore, emb: Option<&EmbeddingTable>, xs: &[Example]) -> Result<Vec<Vec<f64>>> {
        xs.par_iter()
            .map(|x| {
                let tape = Tape::new();
                let b = Binder::new(&tape, store);
                Ok(self.encoder.encode(&b, emb, &x.input)?.data())
            })
            .collect()
    }
}
