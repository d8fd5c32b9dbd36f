//! Reverse-mode gradient recording.
//!
//! Every op evaluates eagerly, appends its output to the [`Tape`] together with
//! a closure mapping the output gradient to parent gradients, and checks the
//! output is finite. [`Tape::backward`] replays the record in reverse.

use std::cell::RefCell;
use std::rc::Rc;

use super::{NnError, Tensor};
use crate::sparse::SparseMatrix;

type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<(usize, Tensor)>>;

struct Node {
    value: Rc<Tensor>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
}

/// Ordered record of primitive ops. Confined to a single thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients of a scalar with respect to every recorded value.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zero-filled when `v` did not influence the loss.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| {
            let [r, c] = v.shape();
            Tensor::zeros(r, c)
        })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A differentiable input such as a model parameter.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, true, None)
    }

    /// A value treated as data; no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, false, None)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, requires_grad: bool, backward: Option<BackwardFn>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), requires_grad, backward });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Gradients of the `1 × 1` value `loss` with respect to everything on the tape.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, NnError> {
        if loss.shape() != [1, 1] {
            return Err(NnError::Shape {
                op: "backward",
                detail: format!("loss must be 1x1, got {:?}", loss.shape()),
            });
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(backward) = node.backward.as_ref() else { continue };
            let Some(g) = grads[id].take() else { continue };
            for (parent, contribution) in backward(&g) {
                if !nodes[parent].requires_grad {
                    continue;
                }
                match &mut grads[parent] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot => *slot = Some(contribution),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn shape_error(op: &'static str, lhs: [usize; 2], rhs: [usize; 2]) -> NnError {
    NnError::Shape {
        op,
        detail: format!("lhs {}x{} vs rhs {}x{}", lhs[0], lhs[1], rhs[0], rhs[1]),
    }
}

fn check_indices(op: &'static str, indices: &[usize], bound: usize) -> Result<(), NnError> {
    match indices.iter().find(|&&i| i >= bound) {
        Some(&bad) => Err(NnError::Index { op, index: bad, bound }),
        None => Ok(()),
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Rc<Tensor> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn id(&self) -> usize {
        self.id
    }

    fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn record(&self, op: &'static str, value: Tensor, parents: &[Var<'t>], backward: BackwardFn) -> Result<Var<'t>, NnError> {
        if !value.is_finite() {
            return Err(NnError::NonFinite { op });
        }
        let requires_grad = parents.iter().any(Var::requires_grad);
        Ok(self.tape.push(value, requires_grad, requires_grad.then_some(backward)))
    }

    fn unary(&self, op: &'static str, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Result<Var<'t>, NnError> {
        let x = self.value();
        let y = Rc::new(x.map(f));
        let id = self.id;
        let (xs, ys) = (Rc::clone(&x), Rc::clone(&y));
        let out = (*y).clone();
        self.record(
            op,
            out,
            &[*self],
            Box::new(move |g| {
                let data = g
                    .data()
                    .iter()
                    .zip(xs.data().iter().zip(ys.data()))
                    .map(|(&g, (&x, &y))| g * df(x, y))
                    .collect();
                vec![(id, Tensor::from_vec(g.rows(), g.cols(), data).expect("same shape"))]
            }),
        )
    }

    pub fn matmul(&self, rhs: Var<'t>) -> Result<Var<'t>, NnError> {
        let (a, b) = (self.value(), rhs.value());
        if a.cols() != b.rows() {
            return Err(shape_error("matmul", a.shape(), b.shape()));
        }
        let out = a.matmul(&b);
        let (ia, ib) = (self.id, rhs.id);
        self.record(
            "matmul",
            out,
            &[*self, rhs],
            Box::new(move |g| vec![(ia, g.matmul(&b.transpose())), (ib, a.transpose().matmul(g))]),
        )
    }

    /// `S · self` for a constant sparse `S`.
    pub fn spmm(&self, s: &Rc<SparseMatrix>) -> Result<Var<'t>, NnError> {
        let x = self.value();
        if s.n_cols() != x.rows() {
            return Err(shape_error("spmm", [s.n_rows(), s.n_cols()], x.shape()));
        }
        let cols = x.cols();
        let out = Tensor::from_vec(s.n_rows(), cols, s.matmul_dense(x.data(), cols))?;
        let s = Rc::clone(s);
        let id = self.id;
        self.record(
            "spmm",
            out,
            &[*self],
            Box::new(move |g| {
                let data = s.transpose_matmul_dense(g.data(), cols);
                vec![(id, Tensor::from_vec(s.n_cols(), cols, data).expect("shape"))]
            }),
        )
    }

    fn same_shape(&self, op: &'static str, rhs: &Var<'t>) -> Result<(), NnError> {
        let (l, r) = (self.shape(), rhs.shape());
        if l != r {
            return Err(shape_error(op, l, r));
        }
        Ok(())
    }

    pub fn add(&self, rhs: Var<'t>) -> Result<Var<'t>, NnError> {
        self.same_shape("add", &rhs)?;
        let out = self.value().zip_map(&rhs.value(), |a, b| a + b);
        let (ia, ib) = (self.id, rhs.id);
        self.record("add", out, &[*self, rhs], Box::new(move |g| vec![(ia, g.clone()), (ib, g.clone())]))
    }

    pub fn sub(&self, rhs: Var<'t>) -> Result<Var<'t>, NnError> {
        self.same_shape("sub", &rhs)?;
        let out = self.value().zip_map(&rhs.value(), |a, b| a - b);
        let (ia, ib) = (self.id, rhs.id);
        self.record("sub", out, &[*self, rhs], Box::new(move |g| vec![(ia, g.clone()), (ib, g.map(|v| -v))]))
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: Var<'t>) -> Result<Var<'t>, NnError> {
        self.same_shape("mul", &rhs)?;
        let (a, b) = (self.value(), rhs.value());
        let out = a.zip_map(&b, |x, y| x * y);
        let (ia, ib) = (self.id, rhs.id);
        self.record(
            "mul",
            out,
            &[*self, rhs],
            Box::new(move |g| vec![(ia, g.zip_map(&b, |g, y| g * y)), (ib, g.zip_map(&a, |g, x| g * x))]),
        )
    }

    /// Adds a `1 × cols` row to every row.
    pub fn add_row(&self, bias: Var<'t>) -> Result<Var<'t>, NnError> {
        let (x, b) = (self.value(), bias.value());
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(shape_error("add_row", x.shape(), b.shape()));
        }
        let mut out = (*x).clone();
        for r in 0..out.rows() {
            for (v, add) in out.row_mut(r).iter_mut().zip(b.data()) {
                *v += add;
            }
        }
        let (ix, ib) = (self.id, bias.id);
        self.record(
            "add_row",
            out,
            &[*self, bias],
            Box::new(move |g| {
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (acc, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *acc += v;
                    }
                }
                vec![(ix, g.clone()), (ib, gb)]
            }),
        )
    }

    /// `mul * self + add`, elementwise.
    pub fn affine(&self, mul: f64, add: f64) -> Result<Var<'t>, NnError> {
        self.unary("affine", move |x| mul * x + add, move |_, _| mul)
    }

    pub fn scale(&self, factor: f64) -> Result<Var<'t>, NnError> {
        self.affine(factor, 0.0)
    }

    pub fn relu(&self) -> Result<Var<'t>, NnError> {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Var<'t>, NnError> {
        self.unary(
            "leaky_relu",
            move |x| if x > 0.0 { x } else { slope * x },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    pub fn exp(&self) -> Result<Var<'t>, NnError> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Result<Var<'t>, NnError> {
        self.unary("ln", f64::ln, |x, _| 1.0 / x)
    }

    pub fn sigmoid(&self) -> Result<Var<'t>, NnError> {
        self.unary("sigmoid", sigmoid, |_, y| y * (1.0 - y))
    }

    /// `ln(1 + e^x)` evaluated without overflow.
    pub fn softplus(&self) -> Result<Var<'t>, NnError> {
        self.unary("softplus", softplus, |x, _| sigmoid(x))
    }

    /// Clamps into `[lo, hi]`; gradient is zero outside the open interval.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Var<'t>, NnError> {
        self.unary("clamp", move |x| x.clamp(lo, hi), move |x, _| if x > lo && x < hi { 1.0 } else { 0.0 })
    }

    pub fn sum(&self) -> Result<Var<'t>, NnError> {
        let x = self.value();
        let [r, c] = x.shape();
        let id = self.id;
        self.record("sum", Tensor::scalar(x.sum()), &[*self], Box::new(move |g| vec![(id, Tensor::full(r, c, g.get(0, 0)))]))
    }

    pub fn mean(&self) -> Result<Var<'t>, NnError> {
        let n = self.value().len();
        if n == 0 {
            return Err(NnError::Shape { op: "mean", detail: "empty tensor".into() });
        }
        self.sum()?.scale(1.0 / n as f64)
    }

    /// Row `k` of the output is row `indices[k]` of `self`.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Var<'t>, NnError> {
        let x = self.value();
        check_indices("gather_rows", indices, x.rows())?;
        let cols = x.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::from_vec(indices.len(), cols, data)?;
        let indices = indices.to_vec();
        let (rows, id) = (x.rows(), self.id);
        self.record(
            "gather_rows",
            out,
            &[*self],
            Box::new(move |g| {
                let mut gx = Tensor::zeros(rows, cols);
                for (k, &i) in indices.iter().enumerate() {
                    for (acc, v) in gx.row_mut(i).iter_mut().zip(g.row(k)) {
                        *acc += v;
                    }
                }
                vec![(id, gx)]
            }),
        )
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Var<'t>, NnError> {
        let x = self.value();
        if start + len > x.rows() {
            return Err(NnError::Index { op: "slice_rows", index: start + len, bound: x.rows() + 1 });
        }
        let [rows, cols] = x.shape();
        let id = self.id;
        self.record(
            "slice_rows",
            x.slice_rows(start, len),
            &[*self],
            Box::new(move |g| {
                let mut gx = Tensor::zeros(rows, cols);
                gx.data_mut()[start * cols..(start + len) * cols].copy_from_slice(g.data());
                vec![(id, gx)]
            }),
        )
    }

    /// Horizontal concatenation `[self ‖ rhs]`.
    pub fn concat_cols(&self, rhs: Var<'t>) -> Result<Var<'t>, NnError> {
        let (a, b) = (self.value(), rhs.value());
        if a.rows() != b.rows() {
            return Err(shape_error("concat_cols", a.shape(), b.shape()));
        }
        let (ca, cb) = (a.cols(), b.cols());
        let mut out = Tensor::zeros(a.rows(), ca + cb);
        for r in 0..a.rows() {
            out.row_mut(r)[..ca].copy_from_slice(a.row(r));
            out.row_mut(r)[ca..].copy_from_slice(b.row(r));
        }
        let (ia, ib) = (self.id, rhs.id);
        self.record(
            "concat_cols",
            out,
            &[*self, rhs],
            Box::new(move |g| {
                let mut ga = Tensor::zeros(g.rows(), ca);
                let mut gb = Tensor::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                vec![(ia, ga), (ib, gb)]
            }),
        )
    }

    /// Per-row dot products, giving an `n × 1` column.
    pub fn row_dot(&self, rhs: Var<'t>) -> Result<Var<'t>, NnError> {
        self.same_shape("row_dot", &rhs)?;
        let (a, b) = (self.value(), rhs.value());
        let out = Tensor::column((0..a.rows()).map(|r| dot(a.row(r), b.row(r))).collect());
        let (ia, ib) = (self.id, rhs.id);
        self.record(
            "row_dot",
            out,
            &[*self, rhs],
            Box::new(move |g| {
                let mut ga = (*b).clone();
                let mut gb = (*a).clone();
                for r in 0..g.rows() {
                    let s = g.get(r, 0);
                    ga.row_mut(r).iter_mut().for_each(|v| *v *= s);
                    gb.row_mut(r).iter_mut().for_each(|v| *v *= s);
                }
                vec![(ia, ga), (ib, gb)]
            }),
        )
    }

    /// Softmax of an `m × 1` column within groups: entry `k` belongs to
    /// group `segments[k]`.
    pub fn segment_softmax(&self, segments: &Rc<Vec<usize>>, n_segments: usize) -> Result<Var<'t>, NnError> {
        let x = self.value();
        if x.cols() != 1 || x.rows() != segments.len() {
            return Err(shape_error("segment_softmax", x.shape(), [segments.len(), 1]));
        }
        check_indices("segment_softmax", segments, n_segments)?;
        let mut max = vec![f64::NEG_INFINITY; n_segments];
        for (&s, &v) in segments.iter().zip(x.data()) {
            max[s] = max[s].max(v);
        }
        let exps: Vec<f64> = segments.iter().zip(x.data()).map(|(&s, &v)| (v - max[s]).exp()).collect();
        let mut denom = vec![0.0; n_segments];
        for (&s, &e) in segments.iter().zip(&exps) {
            denom[s] += e;
        }
        let y = Rc::new(Tensor::column(segments.iter().zip(&exps).map(|(&s, &e)| e / denom[s]).collect()));
        let (ys, segs, id) = (Rc::clone(&y), Rc::clone(segments), self.id);
        self.record(
            "segment_softmax",
            (*y).clone(),
            &[*self],
            Box::new(move |g| {
                let mut weighted = vec![0.0; n_segments];
                for ((&s, &yk), &gk) in segs.iter().zip(ys.data()).zip(g.data()) {
                    weighted[s] += yk * gk;
                }
                let data = segs
                    .iter()
                    .zip(ys.data())
                    .zip(g.data())
                    .map(|((&s, &yk), &gk)| yk * (gk - weighted[s]))
                    .collect();
                vec![(id, Tensor::column(data))]
            }),
        )
    }

    /// Weighted message passing: with `self` the `m × 1` edge weights,
    /// `out[dst_k] += self_k · x[src_k]` over `edges[k] = (src_k, dst_k)`.
    pub fn weighted_scatter(&self, x: Var<'t>, edges: &Rc<Vec<(usize, usize)>>, n_out: usize) -> Result<Var<'t>, NnError> {
        let (w, xv) = (self.value(), x.value());
        if w.cols() != 1 || w.rows() != edges.len() {
            return Err(shape_error("weighted_scatter", w.shape(), [edges.len(), 1]));
        }
        for &(s, d) in edges.iter() {
            if s >= xv.rows() {
                return Err(NnError::Index { op: "weighted_scatter", index: s, bound: xv.rows() });
            }
            if d >= n_out {
                return Err(NnError::Index { op: "weighted_scatter", index: d, bound: n_out });
            }
        }
        let cols = xv.cols();
        let mut out = Tensor::zeros(n_out, cols);
        for (k, &(s, d)) in edges.iter().enumerate() {
            let wk = w.get(k, 0);
            let src = xv.row(s).to_vec();
            for (o, v) in out.row_mut(d).iter_mut().zip(src) {
                *o += wk * v;
            }
        }
        let (iw, ix, es) = (self.id, x.id, Rc::clone(edges));
        let x_rows = xv.rows();
        self.record(
            "weighted_scatter",
            out,
            &[*self, x],
            Box::new(move |g| {
                let mut gw = Tensor::zeros(es.len(), 1);
                let mut gx = Tensor::zeros(x_rows, cols);
                for (k, &(s, d)) in es.iter().enumerate() {
                    gw.set(k, 0, dot(g.row(d), xv.row(s)));
                    let wk = w.get(k, 0);
                    let gd = g.row(d).to_vec();
                    for (acc, v) in gx.row_mut(s).iter_mut().zip(gd) {
                        *acc += wk * v;
                    }
                }
                vec![(iw, gw), (ix, gx)]
            }),
        )
    }

    /// Mean of the rows in each group; row `i` belongs to `segments[i]`.
    pub fn segment_mean(&self, segments: &Rc<Vec<usize>>, n_segments: usize) -> Result<Var<'t>, NnError> {
        let x = self.value();
        if x.rows() != segments.len() {
            return Err(shape_error("segment_mean", x.shape(), [segments.len(), x.cols()]));
        }
        check_indices("segment_mean", segments, n_segments)?;
        let cols = x.cols();
        let mut counts = vec![0usize; n_segments];
        let mut out = Tensor::zeros(n_segments, cols);
        for (i, &s) in segments.iter().enumerate() {
            counts[s] += 1;
            for (o, v) in out.row_mut(s).iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        for (s, &c) in counts.iter().enumerate() {
            if c > 0 {
                out.row_mut(s).iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        let (segs, id, rows) = (Rc::clone(segments), self.id, x.rows());
        self.record(
            "segment_mean",
            out,
            &[*self],
            Box::new(move |g| {
                let mut gx = Tensor::zeros(rows, cols);
                for (i, &s) in segs.iter().enumerate() {
                    let c = counts[s] as f64;
                    for (acc, v) in gx.row_mut(i).iter_mut().zip(g.row(s)) {
                        *acc = v / c;
                    }
                }
                vec![(id, gx)]
            }),
        )
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
