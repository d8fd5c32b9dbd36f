//! SEAL: link prediction by classifying labeled enclosing subgraphs.
//!
//! Each candidate pair `(u, v)` gets the subgraph of nodes within `h` hops
//! of either endpoint, with the `(u, v)` edge removed. Nodes carry their
//! features, a one-hot double-radius label and the mean of their incident
//! edge features inside the subgraph. Two sum-aggregation layers
//! `H' = ReLU(Σ_{j∈N(i)} H_j W)`, a mean-pool readout and a dense head
//! produce one logit per pair.

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::graph::AttributedGraph;
use crate::metrics::{auc, average_precision, timing, tune_threshold};
use crate::nn::{adam_step, cross_entropy, Bound, Checkpoint, ModelState, NnError, Tape, Tensor, Var};
use crate::sparse::SparseMatrix;
use crate::split::{Pair, Part, SplitBundle};
use crate::train::{column_stats, standardize, CurveRow, EarlyStopping, ModelError, TrainConfig};
use crate::vgae::TrainOutcome;

/// Default budget for [`estimate_cost`]: subgraph node rows per epoch.
pub const DEFAULT_COST_LIMIT: f64 = 2.0e6;

/// Message-passing graph with standardized node and edge features.
#[derive(Debug, Clone)]
pub struct SealContext {
    adjacency: Vec<Vec<usize>>,
    features: Tensor,
    edge_feats: HashMap<(usize, usize), Vec<f64>>,
    edge_width: usize,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl SealContext {
    pub fn new(g: &AttributedGraph, message_edges: &[Pair]) -> Result<Self, ModelError> {
        let n = g.n_nodes();
        let rows: Vec<Vec<f64>> = g.nodes().iter().map(|v| v.features.clone()).collect();
        let features = if g.node_feature_width() == 0 { Tensor::zeros(n, 0) } else { standardize(&Tensor::from_rows(&rows)?) };
        let edge_width = g.edge_feature_width();
        let (mean, sd) = column_stats(g.edges().iter().map(|e| e.features.as_slice()), edge_width);
        let mut adjacency = vec![Vec::new(); n];
        let mut edge_feats = HashMap::with_capacity(message_edges.len());
        for &(u, v) in message_edges {
            let e = g
                .edge_between(u, v)
                .ok_or_else(|| ModelError::Input(format!("message edge ({u}, {v}) is not in the graph")))?;
            let scaled = e
                .features
                .iter()
                .zip(mean.iter().zip(&sd))
                .map(|(x, (m, s))| if *s > 1e-12 { (x - m) / s } else { 0.0 })
                .collect();
            if edge_feats.insert(key(u, v), scaled).is_none() {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self { adjacency, features, edge_feats, edge_width })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn input_width(&self, max_label: usize) -> usize {
        self.features.cols() + max_label + 1 + self.edge_width
    }
}

/// A labeled enclosing subgraph. Local node 0 is `u`, node 1 is `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnclosingSubgraph {
    pub target: Pair,
    /// Global node ids in local order.
    pub nodes: Vec<usize>,
    /// Local undirected edges `(a, b)` with `a < b`; never the target pair.
    pub edges: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
    pub features: Tensor,
}

impl EnclosingSubgraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn bfs(adj: &[Vec<usize>], start: usize, blocked: Option<usize>, limit: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        if dist[x] == limit {
            continue;
        }
        for &y in &adj[x] {
            if Some(y) != blocked && dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    dist
}

/// Nodes within `h` hops of `u` or `v` in the message graph with the
/// `(u, v)` edge removed, and the edges among them. Labels and features
/// are left empty.
pub fn extract_subgraph(ctx: &SealContext, pair: Pair, h: usize) -> Result<EnclosingSubgraph, ModelError> {
    let (u, v) = pair;
    let n = ctx.n_nodes();
    if u >= n || v >= n {
        return Err(ModelError::Input(format!("pair ({u}, {v}) out of range (< {n})")));
    }
    if u == v {
        return Err(ModelError::Input(format!("pair ({u}, {v}) is a self-pair")));
    }
    let mut adj = ctx.adjacency.clone();
    adj[u].retain(|&x| x != v);
    adj[v].retain(|&x| x != u);
    let (du, dv) = (bfs(&adj, u, None, h), bfs(&adj, v, None, h));
    let mut others: Vec<usize> = (0..n).filter(|&x| x != u && x != v && (du[x] <= h || dv[x] <= h)).collect();
    others.sort_unstable();
    let nodes: Vec<usize> = [u, v].into_iter().chain(others).collect();
    let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut edges = Vec::new();
    for (a, &x) in nodes.iter().enumerate() {
        for &y in &adj[x] {
            if let Some(&b) = local.get(&y) {
                if a < b {
                    edges.push((a, b));
                }
            }
        }
    }
    edges.sort_unstable();
    Ok(EnclosingSubgraph { target: pair, nodes, edges, labels: Vec::new(), features: Tensor::zeros(0, 0) })
}

/// Double-radius label for distances to the two targets.
pub fn drnl(du: usize, dv: usize) -> usize {
    let d = du + dv;
    1 + du.min(dv) + (d / 2) * ((d / 2) + (d % 2) - 1)
}

/// Targets get 1; nodes unreachable from either target (with the other
/// target masked) get 0; everything else gets [`drnl`].
pub fn label_nodes(sg: &EnclosingSubgraph) -> Vec<usize> {
    let n = sg.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &sg.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let du = bfs(&adj, 0, Some(1), usize::MAX);
    let dv = bfs(&adj, 1, Some(0), usize::MAX);
    (0..n)
        .map(|i| match i {
            0 | 1 => 1,
            _ if du[i] == usize::MAX || dv[i] == usize::MAX => 0,
            _ => drnl(du[i], dv[i]),
        })
        .collect()
}

/// Extracts, labels and featurizes the subgraph around `pair`.
pub fn enclose(ctx: &SealContext, pair: Pair, h: usize, max_label: usize) -> Result<EnclosingSubgraph, ModelError> {
    let mut sg = extract_subgraph(ctx, pair, h)?;
    sg.labels = label_nodes(&sg);
    let fx = ctx.features.cols();
    let width = ctx.input_width(max_label);
    let mut x = Tensor::zeros(sg.len(), width);
    let mut incident = vec![(vec![0.0; ctx.edge_width], 0usize); sg.len()];
    for &(a, b) in &sg.edges {
        let f = &ctx.edge_feats[&key(sg.nodes[a], sg.nodes[b])];
        for i in [a, b] {
            for (acc, v) in incident[i].0.iter_mut().zip(f) {
                *acc += v;
            }
            incident[i].1 += 1;
        }
    }
    for (i, &g) in sg.nodes.iter().enumerate() {
        let row = x.row_mut(i);
        row[..fx].copy_from_slice(ctx.features.row(g));
        row[fx + sg.labels[i].min(max_label)] = 1.0;
        let (sum, count) = &incident[i];
        if *count > 0 {
            for (slot, s) in row[fx + max_label + 1..].iter_mut().zip(sum) {
                *slot = s / *count as f64;
            }
        }
    }
    sg.features = x;
    Ok(sg)
}

pub fn enclose_all(ctx: &SealContext, pairs: &[Pair], h: usize, max_label: usize) -> Result<Vec<EnclosingSubgraph>, ModelError> {
    pairs.par_iter().map(|&p| enclose(ctx, p, h, max_label)).collect()
}

/// Several subgraphs stacked block-diagonally.
pub struct Batch {
    pub x: Tensor,
    pub s: Rc<SparseMatrix>,
    pub graph_of: Rc<Vec<usize>>,
    pub n_graphs: usize,
}

impl Batch {
    pub fn new(graphs: &[&EnclosingSubgraph], normalized: bool) -> Result<Self, ModelError> {
        let width = graphs.first().map_or(0, |g| g.features.cols());
        let total: usize = graphs.iter().map(|g| g.len()).sum();
        let mut data = Vec::with_capacity(total * width);
        let mut triplets = Vec::new();
        let mut graph_of = Vec::with_capacity(total);
        let mut offset = 0;
        for (k, g) in graphs.iter().enumerate() {
            if g.features.cols() != width {
                return Err(ModelError::Input("subgraphs have different feature widths".into()));
            }
            data.extend_from_slice(g.features.data());
            graph_of.extend(std::iter::repeat_n(k, g.len()));
            if normalized {
                let mut deg = vec![1.0f64; g.len()];
                for &(a, b) in &g.edges {
                    deg[a] += 1.0;
                    deg[b] += 1.0;
                }
                for i in 0..g.len() {
                    triplets.push((offset + i, offset + i, 1.0 / deg[i]));
                }
                for &(a, b) in &g.edges {
                    let w = 1.0 / (deg[a] * deg[b]).sqrt();
                    triplets.push((offset + a, offset + b, w));
                    triplets.push((offset + b, offset + a, w));
                }
            } else {
                for &(a, b) in &g.edges {
                    triplets.push((offset + a, offset + b, 1.0));
                    triplets.push((offset + b, offset + a, 1.0));
                }
            }
            offset += g.len();
        }
        Ok(Self {
            x: Tensor::from_vec(total, width, data)?,
            s: Rc::new(SparseMatrix::from_triplets(total, total, &triplets)),
            graph_of: Rc::new(graph_of),
            n_graphs: graphs.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SealDims {
    pub in_dim: usize,
    pub hidden: usize,
    pub hops: usize,
    pub max_label: usize,
    pub normalized: bool,
}

#[derive(Clone, Copy)]
pub struct SealVars<'t> {
    pub w1: Var<'t>,
    pub w2: Var<'t>,
    pub dense_w: Var<'t>,
    pub dense_b: Var<'t>,
    pub out_w: Var<'t>,
    pub out_b: Var<'t>,
}

impl<'t> SealVars<'t> {
    pub fn from_bound(b: &Bound<'t>) -> Self {
        Self {
            w1: b.get("gcn1.w"),
            w2: b.get("gcn2.w"),
            dense_w: b.get("dense.w"),
            dense_b: b.get("dense.b"),
            out_w: b.get("out.w"),
            out_b: b.get("out.b"),
        }
    }
}

/// One logit per subgraph in the batch, as a column.
pub fn seal_logits<'t>(tape: &'t Tape, p: &SealVars<'t>, batch: &Batch) -> Result<Var<'t>, NnError> {
    let x = tape.constant(batch.x.clone());
    let h1 = x.matmul(p.w1)?.spmm(&batch.s)?.relu()?;
    let h2 = h1.matmul(p.w2)?.spmm(&batch.s)?.relu()?;
    let pooled = h2.segment_mean(&batch.graph_of, batch.n_graphs)?;
    let hidden = pooled.matmul(p.dense_w)?.add_row(p.dense_b)?.relu()?;
    hidden.matmul(p.out_w)?.add_row(p.out_b)
}

pub fn seal_loss<'t>(tape: &'t Tape, p: &SealVars<'t>, batch: &Batch, labels: &[f64]) -> Result<Var<'t>, NnError> {
    cross_entropy(tape, seal_logits(tape, p, batch)?, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seal {
    pub dims: SealDims,
    pub state: ModelState,
}

impl Seal {
    pub fn init(dims: SealDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = dims.hidden;
        let mut state = ModelState::new();
        state.insert("gcn1.w", Tensor::glorot(dims.in_dim, h, &mut rng));
        state.insert("gcn2.w", Tensor::glorot(h, h, &mut rng));
        state.insert("dense.w", Tensor::glorot(h, h, &mut rng));
        state.insert("dense.b", Tensor::zeros(1, h));
        state.insert("out.w", Tensor::glorot(h, 1, &mut rng));
        state.insert("out.b", Tensor::zeros(1, 1));
        Self { dims, state }
    }

    /// Logit of one subgraph.
    pub fn forward(&self, sg: &EnclosingSubgraph) -> Result<f64, ModelError> {
        Ok(self.logits(&[sg])?[0])
    }

    pub fn logits(&self, graphs: &[&EnclosingSubgraph]) -> Result<Vec<f64>, ModelError> {
        if graphs.is_empty() {
            return Ok(Vec::new());
        }
        let batch = Batch::new(graphs, self.dims.normalized)?;
        if batch.x.cols() != self.dims.in_dim {
            return Err(ModelError::Input(format!("subgraph features are {} wide, model expects {}", batch.x.cols(), self.dims.in_dim)));
        }
        let tape = Tape::new();
        let bound = self.state.bind_frozen(&tape);
        let logits = seal_logits(&tape, &SealVars::from_bound(&bound), &batch)?;
        Ok(logits.value().data().to_vec())
    }

    /// Link probabilities for `pairs` under the message graph `ctx`.
    pub fn predict_links(&self, ctx: &SealContext, pairs: &[Pair]) -> Result<Vec<f64>, ModelError> {
        let graphs = enclose_all(ctx, pairs, self.dims.hops, self.dims.max_label)?;
        self.predict_subgraphs(&graphs)
    }

    pub fn predict_subgraphs(&self, graphs: &[EnclosingSubgraph]) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(256) {
            let refs: Vec<&EnclosingSubgraph> = chunk.iter().collect();
            out.extend(self.logits(&refs)?.into_iter().map(crate::nn::sigmoid));
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let d = &self.dims;
        Checkpoint::new(self.state.clone())
            .with_meta("model", "seal")
            .with_meta("in_dim", d.in_dim)
            .with_meta("hidden", d.hidden)
            .with_meta("hops", d.hops)
            .with_meta("max_label", d.max_label)
            .with_meta("normalized", d.normalized)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ModelError> {
        if ck.meta("model")? != "seal" {
            return Err(ModelError::Input(format!("checkpoint holds a {} model", ck.meta("model")?)));
        }
        let dims = SealDims {
            in_dim: ck.meta_parsed("in_dim")?,
            hidden: ck.meta_parsed("hidden")?,
            hops: ck.meta_parsed("hops")?,
            max_label: ck.meta_parsed("max_label")?,
            normalized: ck.meta_parsed("normalized")?,
        };
        for (name, p) in Self::init(dims, 0).state.params() {
            if ck.state.get(name)?.shape() != p.value.shape() {
                return Err(ModelError::Input(format!("parameter {name} has the wrong shape")));
            }
        }
        Ok(Self { dims, state: ck.state.clone() })
    }
}

/// Subgraph node rows per epoch: pair count times the mean subgraph size
/// over a prefix sample of pairs.
pub fn estimate_cost(ctx: &SealContext, pairs: &[Pair], h: usize) -> Result<f64, ModelError> {
    let sample = &pairs[..pairs.len().min(64)];
    if sample.is_empty() {
        return Ok(0.0);
    }
    let mut size = 0usize;
    for &p in sample {
        size += extract_subgraph(ctx, p, h)?.len();
    }
    Ok(pairs.len() as f64 * size as f64 / sample.len() as f64)
}

/// Refuses to train when [`estimate_cost`] over all bundle pairs exceeds `limit`.
pub fn check_cost(g: &AttributedGraph, bundle: &SplitBundle, cfg: &TrainConfig, limit: f64) -> Result<f64, ModelError> {
    let ctx = SealContext::new(g, &bundle.message_edges)?;
    let pairs: Vec<Pair> = Part::ALL.iter().flat_map(|&p| bundle.labeled(p).0).collect();
    let estimate = estimate_cost(&ctx, &pairs, cfg.hops)?;
    if estimate > limit {
        return Err(ModelError::TooCostly { estimate, limit });
    }
    Ok(estimate)
}

/// Minibatch training with early stopping on validation AUC.
pub fn train_seal(g: &AttributedGraph, bundle: &SplitBundle, cfg: &TrainConfig) -> Result<TrainOutcome<Seal>, ModelError> {
    cfg.validate()?;
    let (result, secs) = timing(|| train_inner(g, bundle, cfg));
    let mut out = result?;
    out.train_time_s = secs;
    Ok(out)
}

fn train_inner(g: &AttributedGraph, bundle: &SplitBundle, cfg: &TrainConfig) -> Result<TrainOutcome<Seal>, ModelError> {
    let ctx = SealContext::new(g, &bundle.message_edges)?;
    let (train_pairs, train_labels) = bundle.labeled(Part::Train);
    let (val_pairs, val_labels) = bundle.labeled(Part::Val);
    let val_bool: Vec<bool> = val_labels.iter().map(|&l| l > 0.5).collect();
    let train_graphs = enclose_all(&ctx, &train_pairs, cfg.hops, cfg.max_label)?;
    let val_graphs = enclose_all(&ctx, &val_pairs, cfg.hops, cfg.max_label)?;

    let dims = SealDims {
        in_dim: ctx.input_width(cfg.max_label),
        hidden: cfg.hidden,
        hops: cfg.hops,
        max_label: cfg.max_label,
        normalized: cfg.normalized,
    };
    let mut model = Seal::init(dims, cfg.seed);
    let mut best = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5ea1));
    let mut order: Vec<usize> = (0..train_graphs.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut curve = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let diverged = |source| ModelError::Diverged { epoch, source };
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let graphs: Vec<&EnclosingSubgraph> = chunk.iter().map(|&i| &train_graphs[i]).collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| train_labels[i]).collect();
            let batch = Batch::new(&graphs, dims.normalized)?;
            let tape = Tape::new();
            let bound = model.state.bind(&tape);
            let loss = seal_loss(&tape, &SealVars::from_bound(&bound), &batch, &labels).map_err(diverged)?;
            loss_sum += loss.value().get(0, 0) * chunk.len() as f64;
            let grads = tape.backward(loss).map_err(diverged)?;
            adam_step(&mut model.state, &bound.gradients(&grads), cfg.lr, cfg.weight_decay).map_err(diverged)?;
        }
        let scores = model.predict_subgraphs(&val_graphs).map_err(|e| match e {
            ModelError::Nn(source) => diverged(source),
            other => other,
        })?;
        let val_auc = auc(&scores, &val_bool)?;
        let val_ap = average_precision(&scores, &val_bool)?;
        let loss = loss_sum / train_graphs.len() as f64;
        curve.push(CurveRow { epoch, loss, auc: val_auc, ap: val_ap });
        log::debug!("seal epoch {epoch}: loss {loss:.4} val auc {val_auc:.4} ap {val_ap:.4}");
        let (improved, stop) = stopper.observe(epoch, val_auc);
        if improved {
            best = model.clone();
        }
        if stop {
            break;
        }
    }

    let scores = best.predict_subgraphs(&val_graphs)?;
    let threshold = tune_threshold(&scores, &val_bool, &cfg.threshold_grid, cfg.objective).unwrap_or(0.5);
    Ok(TrainOutcome {
        model: best,
        epochs_run: curve.len(),
        curve,
        best_epoch: stopper.best_epoch(),
        best_val_auc: stopper.best(),
        threshold,
        train_time_s: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{homogenize, RawEdge, RawNode};
    use crate::nn::grad_check;

    /// Cell 0 with UEs 0..k, plus a second cell 1 attached to UE 0.
    fn star(k: u64) -> AttributedGraph {
        let ues: Vec<RawNode> = (0..k).map(|i| RawNode { id: i, features: vec![i as f64] }).collect();
        let cells: Vec<RawNode> = (0..2).map(|i| RawNode { id: i, features: vec![0.5] }).collect();
        let mut edges: Vec<RawEdge> =
            (0..k).map(|u| RawEdge { id: u, ue: u, cell: 0, features: vec![u as f64 * 0.1], timestamp: None }).collect();
        edges.push(RawEdge { id: 100, ue: 0, cell: 1, features: vec![0.9], timestamp: None });
        homogenize(&ues, &cells, &edges).unwrap()
    }

    #[test]
    fn drnl_values() {
        assert_eq!(drnl(1, 1), 2);
        assert_eq!(drnl(1, 2), 3);
        assert_eq!(drnl(2, 2), 5);
    }

    #[test]
    fn isolated_pair_is_two_nodes() {
        let g = star(3);
        let ctx = SealContext::new(&g, &[]).unwrap();
        let sg = enclose(&ctx, (1, 3), 1, 4).unwrap();
        assert_eq!(sg.nodes, vec![1, 3]);
        assert!(sg.edges.is_empty());
        assert_eq!(sg.labels, vec![1, 1]);
    }

    #[test]
    fn star_pair_gives_star_minus_target() {
        let g = star(4);
        let edges: Vec<Pair> = g.edge_pairs().into_iter().filter(|&(_, c)| c == 4).collect();
        let ctx = SealContext::new(&g, &edges).unwrap();
        let sg = extract_subgraph(&ctx, (1, 4), 1).unwrap();
        assert_eq!(sg.nodes, vec![1, 4, 0, 2, 3]);
        assert_eq!(sg.edges.len(), 3);
        assert!(!sg.edges.contains(&(0, 1)));
        let labels = label_nodes(&sg);
        // UE 1 is cut off from the cell once the target edge is gone.
        assert_eq!(labels, vec![1, 1, 0, 0, 0]);
    }

    #[test]
    fn labels_on_square() {
        // UEs 0,1 and cells 0,1 fully connected; target (UE0, cell0).
        let ues: Vec<RawNode> = (0..2).map(|i| RawNode { id: i, features: vec![] }).collect();
        let cells = ues.clone();
        let edges: Vec<RawEdge> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .enumerate()
            .map(|(k, &(u, c))| RawEdge { id: k as u64, ue: u, cell: c, features: vec![], timestamp: None })
            .collect();
        let g = homogenize(&ues, &cells, &edges).unwrap();
        let ctx = SealContext::new(&g, &g.edge_pairs()).unwrap();
        let sg = enclose(&ctx, (0, 2), 1, 4).unwrap();
        assert_eq!(sg.nodes, vec![0, 2, 1, 3]);
        // UE1: dv = 1, du = 2 via cell1. Cell1: du = 1, dv = 2.
        assert_eq!(sg.labels, vec![1, 1, 3, 3]);
        assert!(!sg.edges.contains(&(0, 1)));
        assert_eq!(sg.features.cols(), ctx.input_width(4));
    }

    #[test]
    fn zero_weights_give_half() {
        let g = star(3);
        let ctx = SealContext::new(&g, &g.edge_pairs()).unwrap();
        let sg = enclose(&ctx, (0, 3), 1, 4).unwrap();
        let dims = SealDims { in_dim: ctx.input_width(4), hidden: 4, hops: 1, max_label: 4, normalized: false };
        let mut m = Seal::init(dims, 1);
        let names: Vec<String> = m.state.names().map(str::to_string).collect();
        for name in names {
            let zero = m.state.get(&name).unwrap().map(|_| 0.0);
            m.state.insert(name, zero);
        }
        assert_eq!(m.forward(&sg).unwrap(), 0.0);
        assert_eq!(m.predict_subgraphs(&[sg]).unwrap(), vec![0.5]);
    }

    #[test]
    fn permutation_invariant() {
        let g = star(5);
        let ctx = SealContext::new(&g, &g.edge_pairs()).unwrap();
        let sg = enclose(&ctx, (2, 5), 1, 4).unwrap();
        let dims = SealDims { in_dim: ctx.input_width(4), hidden: 6, hops: 1, max_label: 4, normalized: false };
        let m = Seal::init(dims, 3);
        let n = sg.len();
        let perm: Vec<usize> = (0..n).rev().collect();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let rows: Vec<Vec<f64>> = perm.iter().map(|&old| sg.features.row(old).to_vec()).collect();
        let permuted = EnclosingSubgraph {
            target: sg.target,
            nodes: perm.iter().map(|&o| sg.nodes[o]).collect(),
            edges: sg.edges.iter().map(|&(a, b)| (inv[a].min(inv[b]), inv[a].max(inv[b]))).collect(),
            labels: perm.iter().map(|&o| sg.labels[o]).collect(),
            features: Tensor::from_rows(&rows).unwrap(),
        };
        let (a, b) = (m.forward(&sg).unwrap(), m.forward(&permuted).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn three_node_forward_matches_oracle() {
        let sg = EnclosingSubgraph {
            target: (0, 1),
            nodes: vec![0, 1, 2],
            edges: vec![(0, 2), (1, 2)],
            labels: vec![1, 1, 2],
            features: Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap(),
        };
        let dims = SealDims { in_dim: 2, hidden: 1, hops: 1, max_label: 2, normalized: false };
        let mut m = Seal::init(dims, 0);
        m.state.insert("gcn1.w", Tensor::column(vec![1.0, 2.0]));
        m.state.insert("gcn2.w", Tensor::scalar(0.5));
        m.state.insert("dense.w", Tensor::scalar(2.0));
        m.state.insert("dense.b", Tensor::scalar(-1.0));
        m.state.insert("out.w", Tensor::scalar(3.0));
        m.state.insert("out.b", Tensor::scalar(0.25));
        // XW = [1, 2, 3]; sums over neighbors: node0 <- 3, node1 <- 3, node2 <- 1 + 2.
        let h1 = [3.0, 3.0, 3.0];
        // Layer 2: 0.5 * neighbor sums = [1.5, 1.5, 3.0].
        let h2 = [0.5 * h1[2], 0.5 * h1[2], 0.5 * (h1[0] + h1[1])];
        let pooled = h2.iter().sum::<f64>() / 3.0;
        let expected = 3.0 * (2.0 * pooled - 1.0f64).max(0.0) + 0.25;
        assert!((m.forward(&sg).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let g = star(4);
        let ctx = SealContext::new(&g, &g.edge_pairs()).unwrap();
        let graphs: Vec<EnclosingSubgraph> =
            [(0, 4), (1, 5), (2, 4)].iter().map(|&p| enclose(&ctx, p, 1, 3).unwrap()).collect();
        let refs: Vec<&EnclosingSubgraph> = graphs.iter().collect();
        for normalized in [false, true] {
            let batch = Batch::new(&refs, normalized).unwrap();
            let dims = SealDims { in_dim: ctx.input_width(3), hidden: 3, hops: 1, max_label: 3, normalized };
            let m = Seal::init(dims, 8);
            let names: Vec<&str> = m.state.names().collect();
            // Nudge biases off zero so no ReLU sits exactly on its kink.
            let theta: Vec<Tensor> = names.iter().map(|n| m.state.get(n).unwrap().map(|v| v + 0.013)).collect();
            let labels = [1.0, 0.0, 1.0];
            let err = grad_check(
                |tape, vars| {
                    let get = |name: &str| vars[names.iter().position(|n| *n == name).unwrap()];
                    let p = SealVars {
                        w1: get("gcn1.w"),
                        w2: get("gcn2.w"),
                        dense_w: get("dense.w"),
                        dense_b: get("dense.b"),
                        out_w: get("out.w"),
                        out_b: get("out.b"),
                    };
                    seal_loss(tape, &p, &batch, &labels)
                },
                &theta,
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-4, "normalized={normalized}: {err}");
        }
    }

    #[test]
    fn cost_guard_refuses_large_requests() {
        let g = crate::synth::em_reference_graph(1);
        let bundle = crate::split::split_with_negatives(&g, crate::split::DEFAULT_RATIOS, 1).unwrap();
        let cfg = TrainConfig::seal();
        let est = check_cost(&g, &bundle, &cfg, DEFAULT_COST_LIMIT).unwrap();
        assert!(est > 0.0);
        assert!(matches!(check_cost(&g, &bundle, &cfg, est / 2.0), Err(ModelError::TooCostly { .. })));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dims = SealDims { in_dim: 5, hidden: 3, hops: 1, max_label: 2, normalized: true };
        let m = Seal::init(dims, 4);
        let back = Seal::from_checkpoint(&Checkpoint::from_text(&m.to_checkpoint().to_text()).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
