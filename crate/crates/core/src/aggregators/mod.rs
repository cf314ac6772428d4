//! AGGREGATE/COMBINE layers and the k-hop graph neural network.
//!
//! Every layer maps a node's previous-layer vector and the previous-layer
//! vectors of its (truncated) neighbourhood to a new vector:
//!
//! | kind          | aggregate                                   | combine                      |
//! |---------------|---------------------------------------------|------------------------------|
//! | `gcn`         | mean over `N(v) ∪ {v}`                      | `σ(W a)`                     |
//! | `gat`         | attention-weighted sum of `W h_u`           | `σ(a)`                       |
//! | `rgcn`        | per-relation means through basis weights    | `σ(a + W_s h_v)`             |
//! | `lstm`        | last LSTM state over permuted `N(v) ∪ {v}`  | `σ(W [h_v; a])`              |
//! | `transformer` | mean-pooled one-layer transformer           | `σ(W a)`                     |
//!
//! Neighbour inputs are put in a canonical order (by value) before any
//! floating-point reduction, so the symmetric aggregators return bitwise
//! identical results for any input permutation. The LSTM sees that canonical
//! order shuffled by an explicit permutation or a seed.

mod gat;
mod gcn;
mod gnn;
mod lstm;
mod rgcn;
mod transformer;

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gnn::{GnnConfig, GnnStack, GraphContext, Mode};
pub use rgcn::identity_coefficients;

use crate::autodiff::{Binder, ParamStore, Var};
use crate::nn::Activation;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    Gcn,
    Gat,
    Rgcn,
    Lstm,
    Transformer,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 5] = [
        AggregatorKind::Gcn,
        AggregatorKind::Gat,
        AggregatorKind::Rgcn,
        AggregatorKind::Lstm,
        AggregatorKind::Transformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::Gcn => "gcn",
            AggregatorKind::Gat => "gat",
            AggregatorKind::Rgcn => "rgcn",
            AggregatorKind::Lstm => "lstm",
            AggregatorKind::Transformer => "transformer",
        }
    }

    /// Whether COMBINE concatenates the node's own vector by default.
    pub fn default_self_concat(self) -> bool {
        matches!(self, AggregatorKind::Lstm)
    }
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AggregatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown aggregator kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub kind: AggregatorKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Number of RGCN bases.
    pub bases: usize,
    /// Concatenate `h_v` into COMBINE (LSTM and transformer only).
    pub self_concat: bool,
}

impl LayerConfig {
    pub fn new(kind: AggregatorKind, in_dim: usize, out_dim: usize) -> Self {
        Self {
            kind,
            in_dim,
            out_dim,
            activation: Activation::Relu,
            bases: 1,
            self_concat: kind.default_self_concat(),
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_bases(mut self, bases: usize) -> Self {
        self.bases = bases;
        self
    }

    pub fn with_self_concat(mut self, on: bool) -> Self {
        self.self_concat = on;
        self
    }
}

/// One neighbour's previous-layer vector and the relations linking it to
/// the center (only RGCN reads the relations).
#[derive(Debug, Clone)]
pub struct NeighborInput<'t> {
    pub feat: Var<'t>,
    pub relations: Vec<String>,
}

impl<'t> NeighborInput<'t> {
    pub fn new(feat: Var<'t>) -> Self {
        Self {
            feat,
            relations: Vec::new(),
        }
    }

    pub fn with_relations(feat: Var<'t>, relations: &[&str]) -> Self {
        Self {
            feat,
            relations: relations.iter().map(|r| r.to_string()).collect(),
        }
    }
}

/// Order in which the LSTM aggregator reads `N(v) ∪ {v}`.
#[derive(Debug, Clone, Copy)]
pub enum SequenceOrder<'a> {
    /// Indices into `[self, neighbours...]` as given by the caller.
    Explicit(&'a [usize]),
    /// Canonical order shuffled by a generator seeded with this value.
    Seeded(u64),
}

/// Parameterized AGGREGATE + COMBINE unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorLayer {
    pub prefix: String,
    pub config: LayerConfig,
    /// Relation vocabulary of an RGCN layer; row `r` of the basis
    /// coefficients belongs to `relations[r]`.
    pub relations: Vec<String>,
}

impl AggregatorLayer {
    pub fn new(prefix: impl Into<String>, config: LayerConfig, relations: Vec<String>) -> Result<Self> {
        let layer = Self {
            prefix: prefix.into(),
            config,
            relations,
        };
        layer.validate()?;
        Ok(layer)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if c.in_dim == 0 || c.out_dim == 0 {
            return Err(Error::Config(format!("{}: layer dims must be positive", self.prefix)));
        }
        match c.kind {
            AggregatorKind::Rgcn => {
                if c.bases == 0 {
                    return Err(Error::Config(format!("{}: RGCN needs at least one basis", self.prefix)));
                }
                if self.relations.is_empty() {
                    return Err(Error::Config(format!("{}: RGCN needs a relation vocabulary", self.prefix)));
                }
            }
            AggregatorKind::Transformer if c.in_dim < 2 => {
                return Err(Error::Config(format!(
                    "{}: transformer input dim must be at least 2 for a half-width projection",
                    self.prefix
                )));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn kind(&self) -> AggregatorKind {
        self.config.kind
    }

    pub(crate) fn param_name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        match self.config.kind {
            AggregatorKind::Gcn => gcn::init(self, store, rng),
            AggregatorKind::Gat => gat::init(self, store, rng),
            AggregatorKind::Rgcn => rgcn::init(self, store, rng),
            AggregatorKind::Lstm => lstm::init(self, store, rng),
            AggregatorKind::Transformer => transformer::init(self, store, rng),
        }
    }

    /// New vector for a node from its own and its neighbours' vectors.
    /// `order` only affects the LSTM aggregator.
    pub fn forward<'t>(
        &self,
        b: &Binder<'t, '_>,
        self_feat: Var<'t>,
        neighbors: &[NeighborInput<'t>],
        order: SequenceOrder<'_>,
    ) -> Result<Var<'t>> {
        self.check_dim(self_feat)?;
        for n in neighbors {
            self.check_dim(n.feat)?;
        }
        match self.config.kind {
            AggregatorKind::Gcn => gcn::forward(self, b, self_feat, neighbors),
            AggregatorKind::Gat => gat::forward(self, b, self_feat, neighbors),
            AggregatorKind::Rgcn => rgcn::forward(self, b, self_feat, neighbors),
            AggregatorKind::Lstm => lstm::forward(self, b, self_feat, neighbors, order),
            AggregatorKind::Transformer => transformer::forward(self, b, self_feat, neighbors),
        }
    }

    fn check_dim(&self, v: Var<'_>) -> Result<()> {
        let shape = v.shape();
        if shape != [self.config.in_dim] {
            return Err(Error::shape(
                "aggregator input",
                format!("{} expects [{}], got {shape:?}", self.prefix, self.config.in_dim),
            ));
        }
        Ok(())
    }
}

fn cmp_values(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Neighbours sorted by value, then by relation list.
pub(crate) fn canonical<'a, 't>(neighbors: &'a [NeighborInput<'t>]) -> Vec<&'a NeighborInput<'t>> {
    let keyed: Vec<(Vec<f64>, &NeighborInput<'t>)> =
        neighbors.iter().map(|n| (n.feat.data(), n)).collect();
    let mut keyed = keyed;
    keyed.sort_by(|a, b| cmp_values(&a.0, &b.0).then_with(|| a.1.relations.cmp(&b.1.relations)));
    keyed.into_iter().map(|(_, n)| n).collect()
}

/// `[self, canonical neighbours...]`.
pub(crate) fn members<'t>(self_feat: Var<'t>, neighbors: &[NeighborInput<'t>]) -> Vec<Var<'t>> {
    std::iter::once(self_feat)
        .chain(canonical(neighbors).into_iter().map(|n| n.feat))
        .collect()
}

/// Shuffle of `0..n` drawn from `seed`.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

#[cfg(test)]
mod tests;
