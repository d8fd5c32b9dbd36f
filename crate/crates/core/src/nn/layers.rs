//! Graph layers built from tape primitives.

use std::rc::Rc;

use super::{NnError, Tape, Tensor, Var};
use crate::sparse::SparseMatrix;

/// Slope of the LeakyReLU applied to attention logits.
pub const ATTENTION_SLOPE: f64 = 0.2;

fn dims(op: &'static str, detail: String) -> NnError {
    NnError::Shape { op, detail }
}

/// `Â · H · W` without activation.
pub fn gcn_propagate<'t>(h: Var<'t>, a_hat: &Rc<SparseMatrix>, w: Var<'t>) -> Result<Var<'t>, NnError> {
    let ([n, f], [wf, _]) = (h.shape(), w.shape());
    if f != wf {
        return Err(dims("gcn_layer", format!("H is {n}x{f} but W has {wf} rows")));
    }
    if a_hat.n_rows() != n || a_hat.n_cols() != n {
        return Err(dims(
            "gcn_layer",
            format!("A_hat is {}x{} but H has {n} rows", a_hat.n_rows(), a_hat.n_cols()),
        ));
    }
    h.matmul(w)?.spmm(a_hat)
}

/// `ReLU(Â · H · W)`.
pub fn gcn_layer<'t>(h: Var<'t>, a_hat: &Rc<SparseMatrix>, w: Var<'t>) -> Result<Var<'t>, NnError> {
    gcn_propagate(h, a_hat, w)?.relu()
}

/// Directed message edges `(src, dst)` with one self-loop per node appended.
#[derive(Debug, Clone)]
pub struct AttentionEdges {
    n_nodes: usize,
    n_input_edges: usize,
    edges: Rc<Vec<(usize, usize)>>,
    dst: Rc<Vec<usize>>,
    src: Vec<usize>,
}

impl AttentionEdges {
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, NnError> {
        for &(s, d) in edges {
            let bad = if s >= n_nodes { Some(s) } else if d >= n_nodes { Some(d) } else { None };
            if let Some(index) = bad {
                return Err(NnError::Index { op: "gat_layer", index, bound: n_nodes });
            }
        }
        let mut all = edges.to_vec();
        all.extend((0..n_nodes).map(|i| (i, i)));
        Ok(Self {
            n_nodes,
            n_input_edges: edges.len(),
            dst: Rc::new(all.iter().map(|&(_, d)| d).collect()),
            src: all.iter().map(|&(s, _)| s).collect(),
            edges: Rc::new(all),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Edge count including self-loops.
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Appends zero rows for the self-loops to per-edge features.
    pub fn pad_features(&self, edge_feats: &Tensor) -> Result<Tensor, NnError> {
        if edge_feats.rows() != self.n_input_edges {
            return Err(dims(
                "gat_layer",
                format!("{} edge feature rows for {} edges", edge_feats.rows(), self.n_input_edges),
            ));
        }
        let mut data = edge_feats.data().to_vec();
        data.resize(self.len() * edge_feats.cols(), 0.0);
        Tensor::from_vec(self.len(), edge_feats.cols(), data)
    }
}

/// Attention-weighted aggregation over already projected node states `P = W h`.
///
/// `e_ij = LeakyReLU(aᵀ [P_i ‖ P_j ‖ W_e x_ij])` for an edge `j → i`,
/// normalized by softmax over the in-edges of `i`, then `h'_i = Σ_j α_ij P_j`.
/// Returns `(h', α)` with `α` aligned to [`AttentionEdges::pairs`].
pub fn gat_aggregate<'t>(
    projected: Var<'t>,
    edges: &AttentionEdges,
    edge_feats: Var<'t>,
    w_e: Var<'t>,
    a: Var<'t>,
) -> Result<(Var<'t>, Var<'t>), NnError> {
    let [n, hidden] = projected.shape();
    let [m, fe] = edge_feats.shape();
    let [we_in, he] = w_e.shape();
    if n != edges.n_nodes() || m != edges.len() {
        return Err(dims("gat_layer", format!("{n} nodes / {m} edge rows vs {} nodes / {} edges", edges.n_nodes(), edges.len())));
    }
    if we_in != fe {
        return Err(dims("gat_layer", format!("edge features have {fe} columns but W_e has {we_in} rows")));
    }
    if a.shape() != [2 * hidden + he, 1] {
        return Err(dims("gat_layer", format!("attention vector is {:?}, expected [{}, 1]", a.shape(), 2 * hidden + he)));
    }
    let a_dst = a.slice_rows(0, hidden)?;
    let a_src = a.slice_rows(hidden, hidden)?;
    let a_edge = a.slice_rows(2 * hidden, he)?;

    let score_dst = projected.matmul(a_dst)?.gather_rows(&edges.dst)?;
    let score_src = projected.matmul(a_src)?.gather_rows(&edges.src)?;
    let score_edge = edge_feats.matmul(w_e)?.matmul(a_edge)?;
    let logits = score_dst.add(score_src)?.add(score_edge)?.leaky_relu(ATTENTION_SLOPE)?;
    let alpha = logits.segment_softmax(&edges.dst, n)?;
    let out = alpha.weighted_scatter(projected, &edges.edges, n)?;
    Ok((out, alpha))
}

/// Single-head GAT layer with edge features; self-loops carry zero features.
pub fn gat_layer<'t>(
    tape: &'t Tape,
    h: Var<'t>,
    edges: &[(usize, usize)],
    edge_feats: &Tensor,
    w: Var<'t>,
    w_e: Var<'t>,
    a: Var<'t>,
) -> Result<Var<'t>, NnError> {
    gat_layer_with_attention(tape, h, edges, edge_feats, w, w_e, a).map(|(out, _)| out)
}

pub fn gat_layer_with_attention<'t>(
    tape: &'t Tape,
    h: Var<'t>,
    edges: &[(usize, usize)],
    edge_feats: &Tensor,
    w: Var<'t>,
    w_e: Var<'t>,
    a: Var<'t>,
) -> Result<(Var<'t>, Var<'t>), NnError> {
    let ([n, f], [wf, _]) = (h.shape(), w.shape());
    if f != wf {
        return Err(dims("gat_layer", format!("H is {n}x{f} but W has {wf} rows")));
    }
    let att_edges = AttentionEdges::new(n, edges)?;
    let feats = tape.constant(att_edges.pad_features(edge_feats)?);
    gat_aggregate(h.matmul(w)?, &att_edges, feats, w_e, a)
}

/// `σ(z_u · z_v)` for each pair, as an `m × 1` column.
pub fn inner_product_decode<'t>(z: Var<'t>, pairs: &[(usize, usize)]) -> Result<Var<'t>, NnError> {
    let (us, vs): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    z.gather_rows(&us)?.row_dot(z.gather_rows(&vs)?)?.sigmoid()
}

/// Tape-free decoder on a frozen embedding.
pub fn decode_probabilities(z: &Tensor, pairs: &[(usize, usize)]) -> Result<Vec<f64>, NnError> {
    pairs
        .iter()
        .map(|&(u, v)| {
            for i in [u, v] {
                if i >= z.rows() {
                    return Err(NnError::Index { op: "inner_product_decode", index: i, bound: z.rows() });
                }
            }
            Ok(super::tape::sigmoid(super::tape::dot(z.row(u), z.row(v))))
        })
        .collect()
}
