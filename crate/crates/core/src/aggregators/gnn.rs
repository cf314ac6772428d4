use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AggregatorKind, AggregatorLayer, LayerConfig, NeighborInput, SequenceOrder};
use crate::autodiff::{Binder, ParamStore, Tape, Var};
use crate::kg::{FeatureTable, Graph};
use crate::nn::Activation;
use crate::sampler::{center_seed, HitSource, DEFAULT_HOP_LIMITS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub layers: Vec<LayerConfig>,
    /// Top-N neighbours kept per hop, outermost last.
    pub hop_limits: Vec<usize>,
}

impl GnnConfig {
    /// Same kind in every layer; `dims` lists input dim then each output dim.
    pub fn uniform(kind: AggregatorKind, dims: &[usize], activation: Activation) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| LayerConfig::new(kind, w[0], w[1]).with_activation(activation))
            .collect::<Vec<_>>();
        let hop_limits = DEFAULT_HOP_LIMITS.iter().copied().cycle().take(layers.len()).collect();
        Self { layers, hop_limits }
    }

    pub fn with_hop_limits(mut self, hop_limits: Vec<usize>) -> Self {
        self.hop_limits = hop_limits;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("GNN needs at least one layer".into()));
        }
        if self.hop_limits.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "{} hop limits for {} layers",
                self.hop_limits.len(),
                self.layers.len()
            )));
        }
        if self.hop_limits.contains(&0) {
            return Err(Error::Config("hop limits must be positive".into()));
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::Config(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i + 1,
                    w[0].out_dim,
                    i + 2,
                    w[1].in_dim
                )));
            }
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("validated").out_dim
    }
}

/// Whether LSTM neighbour orders vary between passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Callers pass a fresh seed per forward pass.
    Train(u64),
    /// Fixed seed, so orders depend only on `(seed, node, layer)`.
    Eval(u64),
}

impl Mode {
    fn seed(self) -> u64 {
        match self {
            Mode::Train(s) | Mode::Eval(s) => s,
        }
    }
}

/// Graph, node features and hit tables one forward pass reads.
///
/// Every node whose features or hit table are read is recorded, so callers
/// can check which parts of the graph a prediction depended on.
pub struct GraphContext<'a> {
    pub graph: &'a Graph,
    pub features: &'a FeatureTable,
    pub hits: &'a (dyn HitSource + Sync),
    trace: Mutex<BTreeSet<String>>,
}

impl<'a> GraphContext<'a> {
    pub fn new(graph: &'a Graph, features: &'a FeatureTable, hits: &'a (dyn HitSource + Sync)) -> Self {
        Self {
            graph,
            features,
            hits,
            trace: Mutex::new(BTreeSet::new()),
        }
    }

    fn touch(&self, id: &str) {
        self.trace.lock().expect("trace lock").insert(id.to_string());
    }

    /// Nodes read since construction or the last [`clear_trace`](Self::clear_trace).
    pub fn trace(&self) -> BTreeSet<String> {
        self.trace.lock().expect("trace lock").clone()
    }

    pub fn clear_trace(&self) {
        self.trace.lock().expect("trace lock").clear();
    }
}

/// k aggregation layers evaluated outside-in over hit-probability
/// neighbourhoods: layer 1 turns hop-k features into hop-(k-1) vectors, and
/// the last layer produces the center's embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnStack {
    pub config: GnnConfig,
    pub layers: Vec<AggregatorLayer>,
}

type Memo<'t> = HashMap<(String, usize, usize), Var<'t>>;

impl GnnStack {
    /// `relations` is the relation vocabulary RGCN layers accept.
    pub fn new(prefix: &str, config: GnnConfig, relations: &[String]) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layers
            .iter()
            .enumerate()
            .map(|(i, c)| AggregatorLayer::new(format!("{prefix}.l{}", i + 1), c.clone(), relations.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, layers })
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for l in &self.layers {
            l.init(store, rng);
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn out_dim(&self) -> usize {
        self.config.out_dim()
    }

    /// Embedding of `node`.
    pub fn forward<'t>(&self, b: &Binder<'t, '_>, ctx: &GraphContext<'_>, node: &str, mode: Mode) -> Result<Var<'t>> {
        let mut memo = Memo::new();
        self.rep(b, ctx, node, self.depth(), 0, mode, &mut memo)
    }

    /// Embeddings of several nodes, sharing intermediate vectors.
    pub fn forward_many<'t>(
        &self,
        b: &Binder<'t, '_>,
        ctx: &GraphContext<'_>,
        nodes: &[&str],
        mode: Mode,
    ) -> Result<Vec<Var<'t>>> {
        let mut memo = Memo::new();
        nodes
            .iter()
            .map(|n| self.rep(b, ctx, n, self.depth(), 0, mode, &mut memo))
            .collect()
    }

    /// Eval-mode embeddings as plain vectors, one tape per node, in parallel.
    pub fn embed(&self, store: &ParamStore, ctx: &GraphContext<'_>, nodes: &[&str], seed: u64) -> Result<Vec<Vec<f64>>> {
        nodes
            .par_iter()
            .map(|n| {
                let tape = Tape::new();
                let b = Binder::new(&tape, store);
                Ok(self.forward(&b, ctx, n, Mode::Eval(seed))?.data())
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn rep<'t>(
        &self,
        b: &Binder<'t, '_>,
        ctx: &GraphContext<'_>,
        node: &str,
        level: usize,
        depth: usize,
        mode: Mode,
        memo: &mut Memo<'t>,
    ) -> Result<Var<'t>> {
        let key = (node.to_string(), level, depth);
        if let Some(v) = memo.get(&key) {
            return Ok(*v);
        }
        let ix = ctx
            .graph
            .node_index(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))?;
        let out = if level == 0 {
            ctx.touch(node);
            b.vector(ctx.features.require(node)?)
        } else {
            let layer = &self.layers[level - 1];
            let self_feat = self.rep(b, ctx, node, level - 1, depth, mode, memo)?;
            ctx.touch(node);
            let kept = ctx.hits.hits(node)?.top_n(self.config.hop_limits[depth]);
            let mut neighbors = Vec::with_capacity(kept.len());
            for u in &kept {
                let uix = ctx
                    .graph
                    .node_index(u)
                    .ok_or_else(|| Error::UnknownNode(u.clone()))?;
                let feat = self.rep(b, ctx, u, level - 1, depth + 1, mode, memo)?;
                let relations = ctx
                    .graph
                    .relations_between(ix, uix)
                    .into_iter()
                    .map(|r| ctx.graph.relation_id(r).to_string())
                    .collect();
                neighbors.push(NeighborInput { feat, relations });
            }
            let seed = center_seed(mode.seed(), &format!("{node}\u{1f}{level}"));
            layer.forward(b, self_feat, &neighbors, SequenceOrder::Seeded(seed))?
        };
        memo.insert(key, out);
        Ok(out)
    }
}
