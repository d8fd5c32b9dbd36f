//! Homogeneous attributed graph built from bipartite UE/cell association data.
//!
//! UEs and cells are unified into a single node type. UEs take indices
//! `[0, n_ue)` and cells `[n_ue, n_ue + n_cell)`. Stored edges are directed
//! UE → cell, one per pair; message passing treats them as undirected.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::sparse::SparseMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("duplicate raw {kind} id {id}")]
    DuplicateId { kind: NodeKind, id: u64 },
    #[error("edge {edge_id} references unknown {kind} id {raw_id}")]
    DanglingEdge { edge_id: u64, kind: NodeKind, raw_id: u64 },
    #[error("non-finite feature value on {0}")]
    NonFinite(String),
    #[error("density is undefined for a graph with {0} node(s)")]
    UndefinedDensity(usize),
    #[error("invalid graph: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Ue,
    Cell,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Ue => "ue",
            NodeKind::Cell => "cell",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub node_id: usize,
    pub kind: NodeKind,
    /// Identifier in the source data, unique within its kind.
    pub raw_id: u64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub edge_id: u64,
    /// UE node index.
    pub src: usize,
    /// Cell node index.
    pub dst: usize,
    pub features: Vec<f64>,
    pub timestamp: Option<f64>,
}

/// A raw UE or cell row prior to homogenization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawNode {
    pub id: u64,
    pub features: Vec<f64>,
}

/// A raw UE–cell association prior to homogenization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEdge {
    pub id: u64,
    pub ue: u64,
    pub cell: u64,
    pub features: Vec<f64>,
    pub timestamp: Option<f64>,
}

/// Immutable homogeneous graph `G = (V, E, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    n_ue: usize,
    /// Sorted undirected neighbor lists.
    adjacency: Vec<Vec<usize>>,
    edge_lookup: HashMap<(usize, usize), usize>,
    raw_lookup: HashMap<(NodeKind, u64), usize>,
}

impl AttributedGraph {
    /// Assembles a graph from already-indexed records, checking every
    /// structural invariant. Duplicate pairs are resolved with [`dedup_edges`].
    pub fn from_parts(nodes: Vec<NodeRecord>, edges: Vec<EdgeRecord>) -> Result<Self, GraphError> {
        let mut n_ue = 0;
        let mut seen_cell = false;
        let mut raw_lookup = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if node.node_id != i {
                return Err(GraphError::Invalid(format!(
                    "node at position {i} has id {}",
                    node.node_id
                )));
            }
            match node.kind {
                NodeKind::Ue if seen_cell => {
                    return Err(GraphError::Invalid(format!("UE node {i} follows a cell node")))
                }
                NodeKind::Ue => n_ue += 1,
                NodeKind::Cell => seen_cell = true,
            }
            if node.features.iter().any(|v| !v.is_finite()) {
                return Err(GraphError::NonFinite(format!("node {i}")));
            }
            if raw_lookup.insert((node.kind, node.raw_id), i).is_some() {
                return Err(GraphError::DuplicateId { kind: node.kind, id: node.raw_id });
            }
        }
        let edges = dedup_edges(edges);
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut edge_lookup = HashMap::with_capacity(edges.len());
        for (pos, e) in edges.iter().enumerate() {
            let ok = e.src < n_ue && e.dst >= n_ue && e.dst < nodes.len();
            if !ok {
                return Err(GraphError::Invalid(format!(
                    "edge {} ({} -> {}) is not UE -> cell",
                    e.edge_id, e.src, e.dst
                )));
            }
            if e.features.iter().any(|v| !v.is_finite()) {
                return Err(GraphError::NonFinite(format!("edge {}", e.edge_id)));
            }
            adjacency[e.src].push(e.dst);
            adjacency[e.dst].push(e.src);
            edge_lookup.insert((e.src, e.dst), pos);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self { nodes, edges, n_ue, adjacency, edge_lookup, raw_lookup })
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_ue(&self) -> usize {
        self.n_ue
    }

    pub fn n_cell(&self) -> usize {
        self.nodes.len() - self.n_ue
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.nodes[node].kind
    }

    pub fn ue_nodes(&self) -> std::ops::Range<usize> {
        0..self.n_ue
    }

    pub fn cell_nodes(&self) -> std::ops::Range<usize> {
        self.n_ue..self.nodes.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// Undirected membership test.
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge_between(a, b).is_some()
    }

    /// The stored edge joining `a` and `b` in either orientation.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<&EdgeRecord> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edge_lookup.get(&key).map(|&pos| &self.edges[pos])
    }

    pub fn node_feature_width(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.features.len())
    }

    pub fn edge_feature_width(&self) -> usize {
        self.edges.first().map_or(0, |e| e.features.len())
    }

    /// Node index for a raw id of the given kind.
    pub fn node_of_raw(&self, kind: NodeKind, raw_id: u64) -> Option<usize> {
        self.raw_lookup.get(&(kind, raw_id)).copied()
    }

    /// Same node set, keeping only the edges whose `(src, dst)` pair is listed.
    pub fn with_edge_subset(&self, pairs: &[(usize, usize)]) -> Self {
        let keep: HashSet<(usize, usize)> = pairs.iter().copied().collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| keep.contains(&(e.src, e.dst)))
            .cloned()
            .collect();
        Self::from_parts(self.nodes.clone(), edges).expect("subset of a valid graph")
    }

    /// `(src, dst)` pairs of the stored edges, in storage order.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.src, e.dst)).collect()
    }
}

/// Maps raw UE, cell and edge tables onto one homogeneous graph.
///
/// Feature vectors of both node kinds are zero-padded to the wider of the
/// two; edge features are padded to the widest edge. Duplicate UE–cell
/// pairs keep the record with the lowest edge id.
pub fn homogenize(
    ue_table: &[RawNode],
    cell_table: &[RawNode],
    edge_table: &[RawEdge],
) -> Result<AttributedGraph, GraphError> {
    let width = ue_table
        .iter()
        .chain(cell_table)
        .map(|n| n.features.len())
        .max()
        .unwrap_or(0);
    let edge_width = edge_table.iter().map(|e| e.features.len()).max().unwrap_or(0);

    let mut nodes = Vec::with_capacity(ue_table.len() + cell_table.len());
    let mut ue_index = HashMap::with_capacity(ue_table.len());
    let mut cell_index = HashMap::with_capacity(cell_table.len());
    for (kind, table, index) in [
        (NodeKind::Ue, ue_table, &mut ue_index),
        (NodeKind::Cell, cell_table, &mut cell_index),
    ] {
        for raw in table {
            let node_id = nodes.len();
            if index.insert(raw.id, node_id).is_some() {
                return Err(GraphError::DuplicateId { kind, id: raw.id });
            }
            nodes.push(NodeRecord { node_id, kind, raw_id: raw.id, features: padded(&raw.features, width) });
        }
    }

    let mut edges = Vec::with_capacity(edge_table.len());
    for raw in edge_table {
        let src = *ue_index.get(&raw.ue).ok_or(GraphError::DanglingEdge {
            edge_id: raw.id,
            kind: NodeKind::Ue,
            raw_id: raw.ue,
        })?;
        let dst = *cell_index.get(&raw.cell).ok_or(GraphError::DanglingEdge {
            edge_id: raw.id,
            kind: NodeKind::Cell,
            raw_id: raw.cell,
        })?;
        edges.push(EdgeRecord {
            edge_id: raw.id,
            src,
            dst,
            features: padded(&raw.features, edge_width),
            timestamp: raw.timestamp,
        });
    }
    AttributedGraph::from_parts(nodes, edges)
}

fn padded(features: &[f64], width: usize) -> Vec<f64> {
    let mut out = features.to_vec();
    out.resize(width, 0.0);
    out
}

/// Keeps one edge per `(src, dst)` pair: the one with the smallest
/// `edge_id`. Survivors stay in their original relative order.
pub fn dedup_edges(edges: Vec<EdgeRecord>) -> Vec<EdgeRecord> {
    let mut winner: HashMap<(usize, usize), (u64, usize)> = HashMap::with_capacity(edges.len());
    for (pos, e) in edges.iter().enumerate() {
        winner
            .entry((e.src, e.dst))
            .and_modify(|w| {
                if e.edge_id < w.0 {
                    *w = (e.edge_id, pos);
                }
            })
            .or_insert((e.edge_id, pos));
    }
    if winner.len() == edges.len() {
        return edges;
    }
    let keep: HashSet<usize> = winner.values().map(|&(_, pos)| pos).collect();
    edges
        .into_iter()
        .enumerate()
        .filter_map(|(pos, e)| keep.contains(&pos).then_some(e))
        .collect()
}

/// Undirected simple-graph density `|E| / (|V|(|V|-1)/2)`.
pub fn density(g: &AttributedGraph) -> Result<f64, GraphError> {
    let n = g.n_nodes();
    if n < 2 {
        return Err(GraphError::UndefinedDensity(n));
    }
    let pairs = (n as f64) * ((n - 1) as f64) / 2.0;
    Ok(g.n_edges() as f64 / pairs)
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` over the undirected adjacency, where `D̃`
/// is the degree matrix of `A + I`.
pub fn normalized_adjacency(g: &AttributedGraph) -> SparseMatrix {
    let n = g.n_nodes();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / ((g.degree(i) + 1) as f64).sqrt()).collect();
    let mut triplets = Vec::with_capacity(n + 2 * g.n_edges());
    for i in 0..n {
        triplets.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
        for &j in g.neighbors(i) {
            triplets.push((i, j, inv_sqrt[i] * inv_sqrt[j]));
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: u64, width: usize) -> RawNode {
        RawNode { id, features: vec![1.0; width] }
    }

    fn edge(id: u64, ue: u64, cell: u64) -> RawEdge {
        RawEdge { id, ue, cell, features: vec![0.5], timestamp: None }
    }

    fn record(edge_id: u64, src: usize, dst: usize) -> EdgeRecord {
        EdgeRecord { edge_id, src, dst, features: vec![], timestamp: None }
    }

    #[test]
    fn indices_are_ue_first_then_cells() {
        let ues: Vec<_> = (0..70).map(|i| node(i, 2)).collect();
        let cells: Vec<_> = (0..31).map(|i| node(1000 + i, 2)).collect();
        let edges = vec![edge(0, 3, 1004), edge(1, 69, 1030)];
        let g = homogenize(&ues, &cells, &edges).unwrap();
        assert_eq!(g.n_nodes(), 101);
        assert_eq!(g.n_ue(), 70);
        assert_eq!(g.edges()[0].src, 3);
        assert_eq!(g.edges()[0].dst, 74);
        assert_eq!(g.kind(100), NodeKind::Cell);
        assert_eq!(g.node_of_raw(NodeKind::Cell, 1030), Some(100));
    }

    #[test]
    fn empty_edge_table_gives_zero_density() {
        let g = homogenize(&[node(0, 1)], &[node(0, 1)], &[]).unwrap();
        assert_eq!(g.n_edges(), 0);
        assert_eq!(density(&g).unwrap(), 0.0);
    }

    #[test]
    fn features_are_padded_to_widest_kind() {
        let ues = vec![node(0, 3), node(1, 3)];
        let cells = vec![node(0, 5)];
        let g = homogenize(&ues, &cells, &[]).unwrap();
        for n in g.nodes() {
            assert_eq!(n.features.len(), 5);
        }
        assert_eq!(g.nodes()[0].features, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn dangling_edge_names_raw_id() {
        let err = homogenize(&[node(0, 1)], &[node(7, 1)], &[edge(5, 0, 8)]).unwrap_err();
        assert_eq!(err, GraphError::DanglingEdge { edge_id: 5, kind: NodeKind::Cell, raw_id: 8 });
        assert!(err.to_string().contains('8'));
    }

    #[test]
    fn duplicate_raw_ids_are_rejected() {
        let err = homogenize(&[node(0, 1), node(0, 1)], &[node(0, 1)], &[]).unwrap_err();
        assert!(matches!(err, GraphError::DuplicateId { kind: NodeKind::Ue, id: 0 }));
    }

    #[test]
    fn dedup_keeps_minimum_id() {
        let out = dedup_edges(vec![record(7, 0, 1), record(3, 0, 1), record(9, 0, 1)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].edge_id, 3);
    }

    #[test]
    fn dedup_preserves_survivor_order() {
        let input = vec![record(5, 0, 2), record(1, 1, 2), record(2, 0, 2), record(4, 0, 3)];
        let ids: Vec<u64> = dedup_edges(input).iter().map(|e| e.edge_id).collect();
        assert_eq!(ids, vec![1, 2, 4]);
    }

    #[test]
    fn dedup_of_unique_pairs_is_identity() {
        let input = vec![record(2, 0, 2), record(1, 1, 2), record(0, 0, 3)];
        assert_eq!(dedup_edges(input.clone()), input);
    }

    #[test]
    fn density_needs_two_nodes() {
        let g = homogenize(&[node(0, 1)], &[], &[]).unwrap();
        assert_eq!(density(&g), Err(GraphError::UndefinedDensity(1)));
    }

    #[test]
    fn single_pair_density_is_one() {
        let g = homogenize(&[node(0, 1)], &[node(0, 1)], &[edge(0, 0, 0)]).unwrap();
        assert_eq!(density(&g).unwrap(), 1.0);
    }

    #[test]
    fn normalized_adjacency_single_node() {
        let g = homogenize(&[node(0, 1)], &[], &[]).unwrap();
        assert_eq!(normalized_adjacency(&g).to_dense(), vec![vec![1.0]]);
    }

    #[test]
    fn normalized_adjacency_two_nodes() {
        let g = homogenize(&[node(0, 1)], &[node(0, 1)], &[edge(0, 0, 0)]).unwrap();
        let a = normalized_adjacency(&g).to_dense();
        for row in &a {
            for &v in row {
                assert!((v - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalized_adjacency_path_row_sums() {
        // cell(2) - ue(0) - cell(3) is a 3-node path centred on the UE.
        let ues = vec![node(0, 1)];
        let cells = vec![node(0, 1), node(1, 1)];
        let g = homogenize(&ues, &cells, &[edge(0, 0, 0), edge(1, 0, 1)]).unwrap();
        let a = normalized_adjacency(&g);

        // Brute-force oracle: dense (A+I), dense degree scaling.
        let mut dense = vec![vec![0.0; 3]; 3];
        for (i, j) in [(0, 1), (1, 0), (0, 2), (2, 0), (0, 0), (1, 1), (2, 2)] {
            dense[i][j] = 1.0;
        }
        let deg: Vec<f64> = dense.iter().map(|r| r.iter().sum()).collect();
        let expected: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| dense[i][j] / (deg[i] * deg[j]).sqrt()).sum())
            .collect();
        let sums = a.row_sums();
        for (s, e) in sums.iter().zip(&expected) {
            assert!((s - e).abs() < 1e-12);
        }
        // Centre node: 1/3 + 2/sqrt(6).
        assert!((sums[0] - 1.1498).abs() < 1e-4);
        assert!((sums[1] - 0.9082).abs() < 1e-4);
        assert!((sums[2] - 0.9082).abs() < 1e-4);
    }

    #[test]
    fn rejects_cell_to_cell_edge() {
        let nodes = vec![
            NodeRecord { node_id: 0, kind: NodeKind::Cell, raw_id: 0, features: vec![] },
            NodeRecord { node_id: 1, kind: NodeKind::Cell, raw_id: 1, features: vec![] },
        ];
        assert!(AttributedGraph::from_parts(nodes, vec![record(0, 0, 1)]).is_err());
    }
}
