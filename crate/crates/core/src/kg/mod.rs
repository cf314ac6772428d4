//! Multi-relational knowledge graph store.
//!
//! A [`Graph`] is built once from assertion rows and is immutable afterwards.
//! Node and relation ids are interned in first-seen order; every query that
//! derives a new graph (prefix union, k-hop subgraphs) returns a fresh value.

mod features;
mod tsv;

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

pub use features::{
    oov_vector, ConceptTokenizer, EmbeddingTable, FeatureTable, Tokenizer,
};
pub use tsv::{IngestOptions, NODE_DIRECTIVE};

use crate::{Error, Result};

/// Interned position of a node inside one [`Graph`].
pub type NodeIx = usize;
/// Interned position of a relation inside one [`Graph`].
pub type RelIx = usize;

#[derive(Clone, Default)]
pub struct Graph {
    nodes: Vec<String>,
    node_index: HashMap<String, NodeIx>,
    relations: Vec<String>,
    edges: Vec<(NodeIx, RelIx, NodeIx)>,
    // undirected adjacency: distinct neighbours per node, in first-seen order
    neighbors: Vec<Vec<NodeIx>>,
    // undirected (relation, neighbour) pairs, deduplicated
    relational: Vec<Vec<(RelIx, NodeIx)>>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.len())
            .field("relations", &self.relations)
            .field("edges", &self.edges.len())
            .finish()
    }
}

/// Two graphs are equal when they hold the same node, relation and edge
/// sets; interning order is not part of the identity.
impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.node_set() == other.node_set()
            && self.relation_set() == other.relation_set()
            && self.edge_set() == other.edge_set()
    }
}

impl Eq for Graph {}

impl Graph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn node_id(&self, ix: NodeIx) -> &str {
        &self.nodes[ix]
    }

    pub fn relation_id(&self, ix: RelIx) -> &str {
        &self.relations[ix]
    }

    pub fn node_index(&self, id: &str) -> Option<NodeIx> {
        self.node_index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.node_index.contains_key(id)
    }

    pub(crate) fn require(&self, id: &str) -> Result<NodeIx> {
        self.node_index(id)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    /// Edges as interned `(head, relation, tail)` triples in insertion order.
    pub fn edge_indices(&self) -> &[(NodeIx, RelIx, NodeIx)] {
        &self.edges
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, &str)> + '_ {
        self.edges.iter().map(move |&(h, r, t)| {
            (
                self.nodes[h].as_str(),
                self.relations[r].as_str(),
                self.nodes[t].as_str(),
            )
        })
    }

    pub fn has_edge(&self, head: &str, relation: &str, tail: &str) -> bool {
        self.edges()
            .any(|(h, r, t)| h == head && r == relation && t == tail)
    }

    /// Distinct undirected neighbours of `ix`, excluding `ix` itself.
    pub fn neighbors(&self, ix: NodeIx) -> &[NodeIx] {
        &self.neighbors[ix]
    }

    /// Undirected `(relation, neighbour)` pairs touching `ix`.
    pub fn relational_neighbors(&self, ix: NodeIx) -> &[(RelIx, NodeIx)] {
        &self.relational[ix]
    }

    /// Relations linking `a` and `b` in either direction, sorted by index.
    pub fn relations_between(&self, a: NodeIx, b: NodeIx) -> Vec<RelIx> {
        let mut rels: Vec<RelIx> = self.relational[a]
            .iter()
            .filter(|&&(_, n)| n == b)
            .map(|&(r, _)| r)
            .collect();
        rels.sort_unstable();
        rels.dedup();
        rels
    }

    pub fn degree(&self, ix: NodeIx) -> usize {
        self.neighbors[ix].len()
    }

    fn node_set(&self) -> BTreeSet<&str> {
        self.nodes.iter().map(String::as_str).collect()
    }

    fn relation_set(&self) -> BTreeSet<&str> {
        self.relations.iter().map(String::as_str).collect()
    }

    fn edge_set(&self) -> BTreeSet<(&str, &str, &str)> {
        self.edges().collect()
    }

    /// Adds the reverse of every edge under the same relation id.
    pub fn make_bidirectional(&self) -> Graph {
        let mut b = self.rebuild_nodes(|_| true);
        for (h, r, t) in self.edges() {
            b.add_edge(h, r, t);
            b.add_edge(t, r, h);
        }
        b.build()
    }

    /// Merges every node whose id extends another node's id by
    /// `separator + suffix` into that prefix node.
    ///
    /// Merging follows the prefix chain to its root, so `a/b/c` ends up in
    /// `a` when both `a/b` and `a` exist. Edges are re-pointed and
    /// deduplicated; self-loops created by a merge are dropped.
    pub fn union_prefix(&self, separator: &str) -> Graph {
        assert!(!separator.is_empty(), "prefix separator must be non-empty");
        let target: Vec<NodeIx> = (0..self.nodes.len())
            .map(|ix| self.prefix_root(ix, separator))
            .collect();
        if target.iter().enumerate().all(|(i, &t)| i == t) {
            return self.clone();
        }

        let mut b = GraphBuilder::default();
        for &t in &target {
            b.add_node(&self.nodes[t]);
        }
        for r in &self.relations {
            b.intern_relation(r);
        }
        for &(h, r, t) in &self.edges {
            let (h, t) = (target[h], target[t]);
            if h == t {
                continue;
            }
            b.add_edge(&self.nodes[h], &self.relations[r], &self.nodes[t]);
        }
        b.build()
    }

    fn prefix_root(&self, ix: NodeIx, separator: &str) -> NodeIx {
        let id = &self.nodes[ix];
        // shortest existing prefix at a separator boundary is the root of
        // the longest-prefix chain
        for (pos, _) in id.match_indices(separator) {
            if pos == 0 {
                continue;
            }
            if let Some(root) = self.node_index(&id[..pos]) {
                return root;
            }
        }
        ix
    }

    /// Induced subgraph on every node within `k` undirected hops of `center`.
    pub fn khop(&self, center: &str, k: usize) -> Result<Graph> {
        let start = self.require(center)?;
        let mut depth = vec![usize::MAX; self.nodes.len()];
        depth[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            if depth[v] == k {
                continue;
            }
            for &u in &self.neighbors[v] {
                if depth[u] == usize::MAX {
                    depth[u] = depth[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        let keep: Vec<bool> = depth.iter().map(|&d| d != usize::MAX).collect();
        Ok(self.induced(|ix| keep[ix]))
    }

    /// Induced subgraph on the nodes for which `keep` returns true.
    pub fn induced(&self, keep: impl Fn(NodeIx) -> bool) -> Graph {
        let mut b = self.rebuild_nodes(&keep);
        for &(h, r, t) in &self.edges {
            if keep(h) && keep(t) {
                b.add_edge(&self.nodes[h], &self.relations[r], &self.nodes[t]);
            }
        }
        b.build()
    }

    /// Subgraph with the named nodes (and their edges) removed.
    pub fn without_nodes<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Graph {
        let drop: HashSet<NodeIx> = ids
            .into_iter()
            .filter_map(|id| self.node_index(id))
            .collect();
        self.induced(|ix| !drop.contains(&ix))
    }

    fn rebuild_nodes(&self, keep: impl Fn(NodeIx) -> bool) -> GraphBuilder {
        let mut b = GraphBuilder::default();
        for (ix, id) in self.nodes.iter().enumerate() {
            if keep(ix) {
                b.add_node(id);
            }
        }
        for r in &self.relations {
            b.intern_relation(r);
        }
        b
    }
}

#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<String>,
    node_index: HashMap<String, NodeIx>,
    relations: Vec<String>,
    relation_index: HashMap<String, RelIx>,
    edges: Vec<(NodeIx, RelIx, NodeIx)>,
    seen: HashSet<(NodeIx, RelIx, NodeIx)>,
}

impl GraphBuilder {
    pub fn add_node(&mut self, id: &str) -> NodeIx {
        if let Some(&ix) = self.node_index.get(id) {
            return ix;
        }
        let ix = self.nodes.len();
        self.nodes.push(id.to_string());
        self.node_index.insert(id.to_string(), ix);
        ix
    }

    fn intern_relation(&mut self, id: &str) -> RelIx {
        if let Some(&ix) = self.relation_index.get(id) {
            return ix;
        }
        let ix = self.relations.len();
        self.relations.push(id.to_string());
        self.relation_index.insert(id.to_string(), ix);
        ix
    }

    /// Adds `(head, relation, tail)`; duplicates are ignored.
    pub fn add_edge(&mut self, head: &str, relation: &str, tail: &str) -> &mut Self {
        let h = self.add_node(head);
        let r = self.intern_relation(relation);
        let t = self.add_node(tail);
        if self.seen.insert((h, r, t)) {
            self.edges.push((h, r, t));
        }
        self
    }

    pub fn build(self) -> Graph {
        let n = self.nodes.len();
        let mut neighbors: Vec<Vec<NodeIx>> = vec![Vec::new(); n];
        let mut relational: Vec<Vec<(RelIx, NodeIx)>> = vec![Vec::new(); n];
        let mut seen_nb: HashSet<(NodeIx, NodeIx)> = HashSet::new();
        let mut seen_rel: HashSet<(NodeIx, RelIx, NodeIx)> = HashSet::new();
        for &(h, r, t) in &self.edges {
            if h == t {
                continue;
            }
            for (a, b) in [(h, t), (t, h)] {
                if seen_nb.insert((a, b)) {
                    neighbors[a].push(b);
                }
                if seen_rel.insert((a, r, b)) {
                    relational[a].push((r, b));
                }
            }
        }
        Graph {
            nodes: self.nodes,
            node_index: self.node_index,
            relations: self.relations,
            edges: self.edges,
            neighbors,
            relational,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(ids: &[&str]) -> Graph {
        let mut b = Graph::builder();
        for w in ids.windows(2) {
            b.add_edge(w[0], "RelatedTo", w[1]);
        }
        b.build()
    }

    #[test]
    fn builder_dedups_edges() {
        let mut b = Graph::builder();
        b.add_edge("a", "IsA", "b").add_edge("a", "IsA", "b");
        let g = b.build();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn bidirectional_closure() {
        let g = path(&["a", "b", "c"]).make_bidirectional();
        assert_eq!(g.edge_count(), 4);
        for (h, r, t) in g.edges() {
            assert!(g.has_edge(t, r, h));
        }
    }

    #[test]
    fn union_prefix_merges_sense_suffix() {
        let mut b = Graph::builder();
        b.add_edge("politician/n", "IsA", "person");
        b.add_node("politician");
        let g = b.build().union_prefix("/");
        assert_eq!(g.node_count(), 2);
        assert!(g.contains("politician"));
        assert!(!g.contains("politician/n"));
        assert!(g.has_edge("politician", "IsA", "person"));
    }

    #[test]
    fn union_prefix_chain_collapses_to_root() {
        let mut b = Graph::builder();
        b.add_edge("a", "R", "x");
        b.add_edge("a/b", "R", "y");
        b.add_edge("a/b/c", "R", "z");
        let g = b.build().union_prefix("/");
        assert_eq!(g.node_count(), 4);
        for t in ["x", "y", "z"] {
            assert!(g.has_edge("a", "R", t));
        }
    }

    #[test]
    fn union_prefix_without_pairs_is_identity() {
        let g = path(&["a", "b", "c"]);
        assert_eq!(g.union_prefix("/"), g);
    }

    #[test]
    fn union_prefix_ignores_non_boundary_prefixes() {
        // "cat" is not a separator-bounded prefix of "category"
        let mut b = Graph::builder();
        b.add_edge("cat", "R", "category");
        let g = b.build().union_prefix("/");
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn khop_path_depth_two() {
        let g = path(&["a", "b", "c", "d"]);
        let sub = g.khop("a", 2).unwrap();
        let mut ids: Vec<_> = sub.nodes().to_vec();
        ids.sort();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(sub.edge_count(), 2);
    }

    #[test]
    fn khop_isolated_center() {
        let mut b = Graph::builder();
        b.add_node("lonely");
        b.add_edge("x", "R", "y");
        let sub = b.build().khop("lonely", 2).unwrap();
        assert_eq!(sub.nodes(), ["lonely"]);
        assert_eq!(sub.edge_count(), 0);
    }

    #[test]
    fn khop_unknown_center() {
        let g = path(&["a", "b"]);
        assert!(matches!(g.khop("zz", 1), Err(Error::UnknownNode(id)) if id == "zz"));
    }

    #[test]
    fn relations_between_either_direction() {
        let mut b = Graph::builder();
        b.add_edge("a", "IsA", "b").add_edge("b", "PartOf", "a");
        let g = b.build();
        let (a, bb) = (g.node_index("a").unwrap(), g.node_index("b").unwrap());
        let names: Vec<_> = g
            .relations_between(a, bb)
            .into_iter()
            .map(|r| g.relation_id(r))
            .collect();
        assert_eq!(names, ["IsA", "PartOf"]);
        assert_eq!(g.neighbors(a), [bb]);
    }
}
