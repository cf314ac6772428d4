//! Random-walk hit probabilities and top-N neighbourhood truncation.
//!
//! Walks restart at the query node. Each `(center, restart)` pair draws from
//! its own ChaCha8 stream: the key is derived from `(seed, center id)` and the
//! restart index selects the stream, so results do not depend on how centers
//! are scheduled across threads.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kg::{Graph, NodeIx};
use crate::{Error, Result};

pub const DEFAULT_STEPS: usize = 20;
pub const DEFAULT_RESTARTS: usize = 10;
/// Hop-1 and hop-2 truncation sizes.
pub const DEFAULT_HOP_LIMITS: [usize; 2] = [50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub steps: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.restarts == 0 {
            return Err(Error::Config(format!(
                "walk steps and restarts must be positive (got steps={}, restarts={})",
                self.steps, self.restarts
            )));
        }
        Ok(())
    }
}

/// Key for the per-center generator; restarts pick streams within it.
pub fn center_seed(seed: u64, center: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"walk");
    h.update(seed.to_le_bytes());
    h.update(center.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn walk_rng(cfg: &WalkConfig, center: &str, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(center_seed(cfg.seed, center));
    rng.set_stream(restart as u64);
    rng
}

pub(crate) fn visit_counts(g: &Graph, center: NodeIx, cfg: &WalkConfig) -> Vec<u64> {
    let mut counts = vec![0u64; g.node_count()];
    let id = g.node_id(center);
    for restart in 0..cfg.restarts {
        let mut rng = walk_rng(cfg, id, restart);
        let mut current = center;
        for _ in 0..cfg.steps {
            let nbrs = g.neighbors(current);
            if nbrs.is_empty() {
                break;
            }
            current = nbrs[rng.random_range(0..nbrs.len())];
            counts[current] += 1;
        }
    }
    counts
}

/// Visit counts of `restarts` walks of `steps` steps from `center`.
///
/// The starting occupation of `center` is not counted; later returns to it
/// are. Nodes never visited are absent from the map.
pub fn simulate_walks(g: &Graph, center: &str, cfg: &WalkConfig) -> Result<BTreeMap<String, u64>> {
    cfg.validate()?;
    let c = g.require(center)?;
    Ok(visit_counts(g, c, cfg)
        .into_iter()
        .enumerate()
        .filter(|&(_, n)| n > 0)
        .map(|(ix, n)| (g.node_id(ix).to_string(), n))
        .collect())
}

/// Smoothed visit distribution over one node's neighbours, sorted by
/// probability descending then id ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitTable {
    pub center: String,
    #[serde(rename = "neighbors")]
    pub probs: Vec<HitEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitEntry {
    pub id: String,
    pub p: f64,
}

impl HitTable {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, id: &str) -> Option<f64> {
        self.probs.iter().find(|e| e.id == id).map(|e| e.p)
    }

    /// First `min(n, len)` neighbour ids.
    pub fn top_n(&self, n: usize) -> Vec<String> {
        top_n(self, n)
    }
}

/// Add-one smoothed hit probabilities over `N(center)`; counts of
/// non-neighbours are ignored.
pub fn hit_probabilities(counts: &BTreeMap<String, u64>, g: &Graph, center: &str) -> Result<HitTable> {
    let c = g.require(center)?;
    let raw: Vec<(String, u64)> = g
        .neighbors(c)
        .iter()
        .map(|&u| {
            let id = g.node_id(u);
            (id.to_string(), counts.get(id).copied().unwrap_or(0))
        })
        .collect();
    Ok(smooth(center, raw))
}

fn smooth(center: &str, raw: Vec<(String, u64)>) -> HitTable {
    let total: f64 = raw.iter().map(|(_, n)| (*n + 1) as f64).sum();
    let mut probs: Vec<HitEntry> = raw
        .into_iter()
        .map(|(id, n)| HitEntry {
            id,
            p: (n + 1) as f64 / total,
        })
        .collect();
    probs.sort_by(|a, b| b.p.total_cmp(&a.p).then_with(|| a.id.cmp(&b.id)));
    HitTable {
        center: center.to_string(),
        probs,
    }
}

pub fn top_n(table: &HitTable, n: usize) -> Vec<String> {
    assert!(n >= 1, "top_n needs n >= 1");
    table.probs.iter().take(n).map(|e| e.id.clone()).collect()
}

/// Walks from `center` and returns its hit table.
pub fn hit_table(g: &Graph, center: &str, cfg: &WalkConfig) -> Result<HitTable> {
    cfg.validate()?;
    let c = g.require(center)?;
    let counts = visit_counts(g, c, cfg);
    let raw = g
        .neighbors(c)
        .iter()
        .map(|&u| (g.node_id(u).to_string(), counts[u]))
        .collect();
    Ok(smooth(center, raw))
}

/// Supplies hit tables to the GNN forward pass.
pub trait HitSource {
    fn hits(&self, node: &str) -> Result<&HitTable>;
}

/// Hit tables precomputed for every node of one graph.
#[derive(Debug, Clone, Default)]
pub struct HitTables {
    tables: HashMap<String, HitTable>,
}

impl HitTables {
    /// Computes tables for all nodes, in parallel.
    pub fn compute(g: &Graph, cfg: &WalkConfig) -> Result<Self> {
        cfg.validate()?;
        let tables = (0..g.node_count())
            .into_par_iter()
            .map(|ix| {
                let id = g.node_id(ix);
                hit_table(g, id, cfg).map(|t| (id.to_string(), t))
            })
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(Self { tables })
    }

    pub fn insert(&mut self, table: HitTable) {
        self.tables.insert(table.center.clone(), table);
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Tables sorted by center id.
    pub fn sorted(&self) -> Vec<&HitTable> {
        let mut v: Vec<&HitTable> = self.tables.values().collect();
        v.sort_by(|a, b| a.center.cmp(&b.center));
        v
    }
}

impl HitSource for HitTables {
    fn hits(&self, node: &str) -> Result<&HitTable> {
        self.tables
            .get(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))
    }
}
