//! Loader for anonymized RW-style node/edge tables and seeded subsetting.
//!
//! Node file: `node_id,kind,f1..fk` with `kind` in `{ue, cell}`.
//! Edge file: `edge_id,src,dst,f1..fm`. Both carry a header row; `k` and `m`
//! are read from it. A node row may carry fewer features than the header
//! declares (UE and cell schemas differ) but every row of one kind must
//! have the same width.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{homogenize, AttributedGraph, EdgeRecord, GraphError, NodeKind, NodeRecord, RawEdge, RawNode};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file} line {line}: {msg}")]
    Malformed { file: String, line: usize, msg: String },
    #[error("subset out of bounds: {0}")]
    Bounds(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Parsed tables plus the number of feature values clamped into `[0, 1]`.
#[derive(Debug, Clone, Default)]
pub struct Tables {
    pub ues: Vec<RawNode>,
    pub cells: Vec<RawNode>,
    pub edges: Vec<RawEdge>,
    pub clamped: usize,
}

impl Tables {
    pub fn into_graph(self) -> Result<AttributedGraph, IngestError> {
        Ok(homogenize(&self.ues, &self.cells, &self.edges)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsetSpec {
    pub n_cells: usize,
    pub n_ues: usize,
    pub selection_seed: u64,
}

fn malformed(file: &str, line: usize, msg: impl Into<String>) -> IngestError {
    IngestError::Malformed { file: file.to_string(), line, msg: msg.into() }
}

fn header_width(file: &str, header: Option<std::io::Result<String>>, fixed: &[&str]) -> Result<usize, IngestError> {
    let header = header
        .ok_or_else(|| malformed(file, 1, "missing header"))?
        .map_err(|e| malformed(file, 1, e.to_string()))?;
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if cols.len() < fixed.len() || cols[..fixed.len()] != *fixed {
        return Err(malformed(file, 1, format!("header must start with {}", fixed.join(","))));
    }
    Ok(cols.len() - fixed.len())
}

fn parse_features(file: &str, line: usize, fields: &[&str], clamped: &mut usize) -> Result<Vec<f64>, IngestError> {
    fields
        .iter()
        .map(|f| {
            let v: f64 = f.trim().parse().map_err(|_| malformed(file, line, format!("bad feature value {f:?}")))?;
            if !v.is_finite() {
                return Err(malformed(file, line, format!("non-finite feature value {f:?}")));
            }
            if !(0.0..=1.0).contains(&v) {
                log::warn!("{file} line {line}: feature {v} outside [0, 1], clamped");
                *clamped += 1;
                return Ok(v.clamp(0.0, 1.0));
            }
            Ok(v)
        })
        .collect()
}

/// Parses node and edge tables from readers; `names` label error messages.
pub fn parse_tables<N: BufRead, E: BufRead>(
    nodes: N,
    edges: E,
    names: (&str, &str),
) -> Result<Tables, IngestError> {
    let (node_name, edge_name) = names;
    let mut out = Tables::default();
    let mut kinds: HashMap<u64, NodeKind> = HashMap::new();
    let mut widths: HashMap<NodeKind, usize> = HashMap::new();

    let mut lines = nodes.lines();
    let max_width = header_width(node_name, lines.next(), &["node_id", "kind"])?;
    for (i, line) in lines.enumerate() {
        let no = i + 2;
        let line = line.map_err(|e| malformed(node_name, no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 || fields.len() - 2 > max_width {
            return Err(malformed(node_name, no, format!("expected at most {} fields, got {}", max_width + 2, fields.len())));
        }
        let id: u64 = fields[0].trim().parse().map_err(|_| malformed(node_name, no, format!("bad node id {:?}", fields[0])))?;
        let kind = match fields[1].trim() {
            "ue" => NodeKind::Ue,
            "cell" => NodeKind::Cell,
            other => return Err(malformed(node_name, no, format!("unknown node kind {other:?}"))),
        };
        let features = parse_features(node_name, no, &fields[2..], &mut out.clamped)?;
        let width = *widths.entry(kind).or_insert(features.len());
        if width != features.len() {
            return Err(malformed(node_name, no, format!("{kind} row has {} features, expected {width}", features.len())));
        }
        if kinds.insert(id, kind).is_some() {
            return Err(malformed(node_name, no, format!("duplicate node id {id}")));
        }
        let node = RawNode { id, features };
        match kind {
            NodeKind::Ue => out.ues.push(node),
            NodeKind::Cell => out.cells.push(node),
        }
    }

    let mut lines = edges.lines();
    let edge_width = header_width(edge_name, lines.next(), &["edge_id", "src", "dst"])?;
    for (i, line) in lines.enumerate() {
        let no = i + 2;
        let line = line.map_err(|e| malformed(edge_name, no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != edge_width + 3 {
            return Err(malformed(edge_name, no, format!("expected {} fields, got {}", edge_width + 3, fields.len())));
        }
        let id = |k: usize| -> Result<u64, IngestError> {
            fields[k].trim().parse().map_err(|_| malformed(edge_name, no, format!("bad id {:?}", fields[k])))
        };
        let (edge_id, a, b) = (id(0)?, id(1)?, id(2)?);
        let kind_of = |n: u64| kinds.get(&n).copied().ok_or_else(|| malformed(edge_name, no, format!("unknown node {n}")));
        let (ue, cell) = match (kind_of(a)?, kind_of(b)?) {
            (NodeKind::Ue, NodeKind::Cell) => (a, b),
            (NodeKind::Cell, NodeKind::Ue) => (b, a),
            _ => return Err(malformed(edge_name, no, format!("edge {edge_id} does not join a UE and a cell"))),
        };
        let features = parse_features(edge_name, no, &fields[3..], &mut out.clamped)?;
        out.edges.push(RawEdge { id: edge_id, ue, cell, features, timestamp: None });
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

/// Loads node and edge files into a deduplicated homogeneous graph.
pub fn load_edge_list(node_file: &Path, edge_file: &Path) -> Result<AttributedGraph, IngestError> {
    let names = (node_file.display().to_string(), edge_file.display().to_string());
    let tables = parse_tables(open(node_file)?, open(edge_file)?, (&names.0, &names.1))?;
    if tables.clamped > 0 {
        log::warn!("clamped {} feature values into [0, 1]", tables.clamped);
    }
    tables.into_graph()
}

/// Writes a graph as node and edge tables. Node ids are the graph's node
/// indices, which are unique across kinds.
pub fn write_tables<N: Write, E: Write>(g: &AttributedGraph, mut nodes: N, mut edges: E) -> std::io::Result<()> {
    let width = g.node_feature_width();
    write!(nodes, "node_id,kind")?;
    for k in 1..=width {
        write!(nodes, ",f{k}")?;
    }
    writeln!(nodes)?;
    for n in g.nodes() {
        write!(nodes, "{},{}", n.node_id, n.kind)?;
        for v in &n.features {
            write!(nodes, ",{v}")?;
        }
        writeln!(nodes)?;
    }
    write!(edges, "edge_id,src,dst")?;
    for k in 1..=g.edge_feature_width() {
        write!(edges, ",f{k}")?;
    }
    writeln!(edges)?;
    for e in g.edges() {
        write!(edges, "{},{},{}", e.edge_id, e.src, e.dst)?;
        for v in &e.features {
            write!(edges, ",{v}")?;
        }
        writeln!(edges)?;
    }
    Ok(())
}

/// The graph induced by the nodes flagged in `keep`, reindexed compactly in
/// the original order.
pub fn induced_subgraph(g: &AttributedGraph, keep: &[bool]) -> Result<AttributedGraph, IngestError> {
    let mut remap = vec![usize::MAX; g.n_nodes()];
    let mut nodes = Vec::new();
    for n in g.nodes() {
        if keep[n.node_id] {
            remap[n.node_id] = nodes.len();
            nodes.push(NodeRecord { node_id: nodes.len(), ..n.clone() });
        }
    }
    let edges = g
        .edges()
        .iter()
        .filter(|e| keep[e.src] && keep[e.dst])
        .map(|e| EdgeRecord { src: remap[e.src], dst: remap[e.dst], ..e.clone() })
        .collect();
    Ok(AttributedGraph::from_parts(nodes, edges)?)
}

/// Seeded subset: cells first, then UEs attached to the chosen cells, then
/// other UEs if the attached ones fall short.
pub fn extract_subset(g: &AttributedGraph, spec: SubsetSpec) -> Result<AttributedGraph, IngestError> {
    if spec.n_cells == 0 || spec.n_ues == 0 {
        return Err(IngestError::Bounds("subset counts must be positive".into()));
    }
    if spec.n_cells > g.n_cell() || spec.n_ues > g.n_ue() {
        return Err(IngestError::Bounds(format!(
            "requested {} cells / {} UEs from a graph with {} / {}",
            spec.n_cells,
            spec.n_ues,
            g.n_cell(),
            g.n_ue()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.selection_seed);
    let mut cells: Vec<usize> = g.cell_nodes().collect();
    cells.shuffle(&mut rng);
    cells.truncate(spec.n_cells);
    cells.sort_unstable();

    let mut attached: Vec<usize> = Vec::new();
    let mut seen = HashSet::new();
    for &c in &cells {
        for &u in g.neighbors(c) {
            if seen.insert(u) {
                attached.push(u);
            }
        }
    }
    attached.shuffle(&mut rng);
    let mut ues: Vec<usize> = attached.into_iter().take(spec.n_ues).collect();
    if ues.len() < spec.n_ues {
        let mut rest: Vec<usize> = g.ue_nodes().filter(|u| !seen.contains(u)).collect();
        rest.shuffle(&mut rng);
        ues.extend(rest.into_iter().take(spec.n_ues - ues.len()));
    }

    let mut keep = vec![false; g.n_nodes()];
    for n in cells.into_iter().chain(ues) {
        keep[n] = true;
    }
    induced_subgraph(g, &keep)
}

/// Shape of a synthetic RW-style dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwShape {
    pub n_cells: usize,
    pub n_ues: usize,
    /// Number of isolated sub-networks the cells are grouped into.
    pub n_groups: usize,
    pub ue_width: usize,
    pub cell_width: usize,
    pub edge_width: usize,
    /// Cells each UE attaches to, inclusive range.
    pub ue_degree: (usize, usize),
}

impl RwShape {
    /// Narrow desk-scale stand-in for the 985-cell subset.
    pub fn desk(n_cells: usize, n_ues: usize) -> Self {
        Self {
            n_cells,
            n_ues,
            n_groups: (n_cells / 4).max(1),
            ue_width: 16,
            cell_width: 8,
            edge_width: 6,
            ue_degree: (1, 3),
        }
    }
}

/// Synthetic RW-style tables: cells grouped into isolated sub-networks, UEs
/// attached to cells of one group, anonymized features in `[0, 1]` whose
/// means depend on the group.
pub fn rw_like_tables(shape: RwShape, seed: u64) -> Tables {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = shape.n_groups.clamp(1, shape.n_cells.max(1));
    let centers: Vec<Vec<f64>> = (0..groups)
        .map(|_| (0..shape.ue_width.max(shape.cell_width).max(shape.edge_width)).map(|_| rng.random::<f64>()).collect())
        .collect();
    let noisy = |rng: &mut ChaCha8Rng, center: &[f64], width: usize| -> Vec<f64> {
        (0..width).map(|k| (center[k] + 0.15 * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0)).collect()
    };
    let cell_group: Vec<usize> = (0..shape.n_cells).map(|c| c % groups).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for (c, &grp) in cell_group.iter().enumerate() {
        members[grp].push(c);
    }
    let cells: Vec<RawNode> = (0..shape.n_cells)
        .map(|c| RawNode { id: (shape.n_ues + c) as u64, features: noisy(&mut rng, &centers[cell_group[c]], shape.cell_width) })
        .collect();

    let mut ues = Vec::with_capacity(shape.n_ues);
    let mut edges = Vec::new();
    for u in 0..shape.n_ues {
        let grp = if u < groups { u } else { rng.random_range(0..groups) };
        ues.push(RawNode { id: u as u64, features: noisy(&mut rng, &centers[grp], shape.ue_width) });
        let pool = &members[grp];
        let (lo, hi) = shape.ue_degree;
        let k = rng.random_range(lo..=hi).min(pool.len()).max(1);
        for &c in pool.choose_multiple(&mut rng, k) {
            let features = noisy(&mut rng, &centers[grp], shape.edge_width);
            edges.push(RawEdge { id: edges.len() as u64, ue: u as u64, cell: (shape.n_ues + c) as u64, features, timestamp: None });
        }
    }
    Tables { ues, cells, edges, clamped: 0 }
}
