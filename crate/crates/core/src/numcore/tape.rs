//! Dynamically recorded computation graph with reverse-mode differentiation.
//!
//! Every operation evaluates eagerly and appends a node, so node order is a
//! topological order. [`Tape::backward`] walks it once in reverse.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{Grad, ParamGrads, ParamId, ParamSet};
use super::tensor::{gemm_acc, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpTag {
    Input,
    Param,
    MatMul,
    Add,
    AddRow,
    Concat,
    Slice,
    Transpose,
    Tanh,
    Sigmoid,
    Softmax,
    Mul,
    RowLookup,
    Dot,
    Scale,
    CrossEntropy,
    Dropout,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    Slice {
        src: NodeId,
        row0: usize,
        col0: usize,
    },
    Transpose(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    Mul(NodeId, NodeId),
    RowLookup {
        table: NodeId,
        rows: Vec<usize>,
    },
    Dot(NodeId, NodeId),
    Scale(NodeId, f64),
    CrossEntropy {
        logits: NodeId,
        gold: usize,
    },
    Dropout {
        src: NodeId,
        mask: Vec<f64>,
    },
}

impl Op {
    fn tag(&self) -> OpTag {
        match self {
            Op::Input => OpTag::Input,
            Op::Param(_) => OpTag::Param,
            Op::MatMul(..) => OpTag::MatMul,
            Op::Add(..) => OpTag::Add,
            Op::AddRow(..) => OpTag::AddRow,
            Op::ConcatCols(_) | Op::ConcatRows(_) => OpTag::Concat,
            Op::Slice { .. } => OpTag::Slice,
            Op::Transpose(_) => OpTag::Transpose,
            Op::Tanh(_) => OpTag::Tanh,
            Op::Sigmoid(_) => OpTag::Sigmoid,
            Op::Softmax(_) => OpTag::Softmax,
            Op::Mul(..) => OpTag::Mul,
            Op::RowLookup { .. } => OpTag::RowLookup,
            Op::Dot(..) => OpTag::Dot,
            Op::Scale(..) => OpTag::Scale,
            Op::CrossEntropy { .. } => OpTag::CrossEntropy,
            Op::Dropout { .. } => OpTag::Dropout,
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Input | Op::Param(_) => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Mul(a, b) | Op::Dot(a, b) => {
                vec![*a, *b]
            }
            Op::ConcatCols(v) | Op::ConcatRows(v) => v.clone(),
            Op::Slice { src, .. }
            | Op::Transpose(src)
            | Op::Tanh(src)
            | Op::Sigmoid(src)
            | Op::Softmax(src)
            | Op::Scale(src, _)
            | Op::Dropout { src, .. } => vec![*src],
            Op::RowLookup { table, .. } => vec![*table],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

struct Node {
    op: Op,
    value: Value,
}

/// Append-only record of one forward pass over a shared parameter snapshot.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
    seed: u64,
    rng: ChaCha8Rng,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_vec(t.rows(), t.cols(), t.data().iter().map(|&x| f(x)).collect())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax over all elements.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet, seed: u64) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => self.params.get(*p),
        }
    }

    pub fn op_tag(&self, id: NodeId) -> OpTag {
        self.nodes[id.0].op.tag()
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Leaf bound to a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: Value::Param(id),
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", va, vb));
        }
        let mut out = Tensor::zeros(va.rows(), vb.cols());
        gemm_acc(va, false, vb, false, &mut out);
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va, vb));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        Ok(self.push(Op::Add(a, b), out))
    }

    /// Adds the `1 × c` row `b` to every row of the `m × c` tensor `a`.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if vb.rows() != 1 || va.cols() != vb.cols() {
            return Err(shape_err("add_row", va, vb));
        }
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (x, y) in out.row_mut(r).iter_mut().zip(vb.data()) {
                *x += y;
            }
        }
        Ok(self.push(Op::AddRow(a, b), out))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_err("concat", self.value(parts[0]), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let v = self.value(p);
                out.row_mut(r)[c0..c0 + v.cols()].copy_from_slice(v.row(r));
                c0 += v.cols();
            }
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(shape_err("concat", self.value(parts[0]), v));
            }
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        Ok(self.push(
            Op::ConcatRows(parts.to_vec()),
            Tensor::from_vec(rows, cols, data),
        ))
    }

    pub fn slice(
        &mut self,
        src: NodeId,
        row0: usize,
        rows: usize,
        col0: usize,
        cols: usize,
    ) -> Result<NodeId> {
        let v = self.value(src);
        if row0 + rows > v.rows() || col0 + cols > v.cols() {
            return Err(Error::Shape {
                op: "slice",
                lhs: v.shape(),
                rhs: (row0 + rows, col0 + cols),
            });
        }
        let out = Tensor::from_fn(rows, cols, |r, c| v.get(row0 + r, col0 + c));
        Ok(self.push(Op::Slice { src, row0, col0 }, out))
    }

    pub fn row(&mut self, src: NodeId, r: usize) -> Result<NodeId> {
        let cols = self.value(src).cols();
        self.slice(src, r, 1, 0, cols)
    }

    pub fn transpose(&mut self, src: NodeId) -> NodeId {
        let out = self.value(src).transpose();
        self.push(Op::Transpose(src), out)
    }

    pub fn tanh(&mut self, src: NodeId) -> NodeId {
        let out = map(self.value(src), f64::tanh);
        self.push(Op::Tanh(src), out)
    }

    pub fn sigmoid(&mut self, src: NodeId) -> NodeId {
        let out = map(self.value(src), sigmoid);
        self.push(Op::Sigmoid(src), out)
    }

    /// Softmax over every element of `src` (a row or column vector in practice).
    pub fn softmax(&mut self, src: NodeId) -> NodeId {
        let v = self.value(src);
        let out = Tensor::from_vec(v.rows(), v.cols(), softmax(v.data()));
        self.push(Op::Softmax(src), out)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(va.rows(), va.cols(), data);
        Ok(self.push(Op::Mul(a, b), out))
    }

    /// Gathers `rows` of `table` into an `rows.len() × cols` tensor.
    pub fn lookup(&mut self, table: NodeId, rows: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        if let Some(&bad) = rows.iter().find(|&&r| r >= t.rows()) {
            return Err(Error::Shape {
                op: "row_lookup",
                lhs: t.shape(),
                rhs: (bad, 0),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * t.cols());
        for &r in rows {
            data.extend_from_slice(t.row(r));
        }
        let out = Tensor::from_vec(rows.len(), t.cols(), data);
        Ok(self.push(
            Op::RowLookup {
                table,
                rows: rows.to_vec(),
            },
            out,
        ))
    }

    /// Row-wise inner product: `m × k`, `m × k` → `m × 1`.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("dot", va, vb));
        }
        let data = (0..va.rows())
            .map(|r| va.row(r).iter().zip(vb.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        let out = Tensor::from_vec(va.rows(), 1, data);
        Ok(self.push(Op::Dot(a, b), out))
    }

    pub fn scale(&mut self, src: NodeId, k: f64) -> NodeId {
        let out = map(self.value(src), |x| x * k);
        self.push(Op::Scale(src, k), out)
    }

    /// Softmax cross-entropy of a logit vector against a gold class index.
    pub fn cross_entropy(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let v = self.value(logits);
        if gold >= v.len() {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: v.shape(),
                rhs: (gold, 0),
            });
        }
        let loss = log_sum_exp(v.data()) - v.data()[gold];
        Ok(self.push(Op::CrossEntropy { logits, gold }, Tensor::scalar(loss)))
    }

    /// Inverted dropout with a mask drawn from the tape's RNG.
    pub fn dropout(&mut self, src: NodeId, rate: f64) -> NodeId {
        if rate <= 0.0 {
            return src;
        }
        let keep = 1.0 - rate;
        let n = self.value(src).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let v = self.value(src);
        let data = v.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(v.rows(), v.cols(), data);
        self.push(Op::Dropout { src, mask }, out)
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss(lv.shape()));
        }
        let n = self.nodes.len();
        let mut adj: Vec<Option<Tensor>> = vec![None; n];
        adj[loss.0] = Some(Tensor::scalar(1.0));
        let mut sparse: BTreeMap<ParamId, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();

        fn acc(adj: &mut [Option<Tensor>], id: NodeId, shape: (usize, usize)) -> &mut Tensor {
            adj[id.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    gemm_acc(&g, false, vb, true, acc(&mut adj, *a, va.shape()));
                    gemm_acc(va, true, &g, false, acc(&mut adj, *b, vb.shape()));
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.shape()).add_assign(&g);
                    acc(&mut adj, *b, g.shape()).add_assign(&g);
                }
                Op::AddRow(a, b) => {
                    acc(&mut adj, *a, g.shape()).add_assign(&g);
                    let gb = acc(&mut adj, *b, (1, g.cols()));
                    for r in 0..g.rows() {
                        for (x, y) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let shape = self.value(p).shape();
                        let gp = acc(&mut adj, p, shape);
                        for r in 0..shape.0 {
                            for (x, y) in gp.row_mut(r).iter_mut().zip(&g.row(r)[c0..c0 + shape.1])
                            {
                                *x += y;
                            }
                        }
                        c0 += shape.1;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let shape = self.value(p).shape();
                        let len = shape.0 * shape.1;
                        let gp = acc(&mut adj, p, shape);
                        for (x, y) in gp.data_mut().iter_mut().zip(&g.data()[off..off + len]) {
                            *x += y;
                        }
                        off += len;
                    }
                }
                Op::Slice { src, row0, col0 } => {
                    let shape = self.value(*src).shape();
                    let gs = acc(&mut adj, *src, shape);
                    for r in 0..g.rows() {
                        let dst = &mut gs.row_mut(row0 + r)[*col0..col0 + g.cols()];
                        for (x, y) in dst.iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                }
                Op::Transpose(src) => {
                    acc(&mut adj, *src, (g.cols(), g.rows())).add_assign(&g.transpose());
                }
                Op::Tanh(src) => {
                    let y = self.value(NodeId(i));
                    let shape = y.shape();
                    let gs = acc(&mut adj, *src, shape);
                    for ((x, gy), yy) in gs.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *x += gy * (1.0 - yy * yy);
                    }
                }
                Op::Sigmoid(src) => {
                    let y = self.value(NodeId(i));
                    let gs = acc(&mut adj, *src, y.shape());
                    for ((x, gy), yy) in gs.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *x += gy * yy * (1.0 - yy);
                    }
                }
                Op::Softmax(src) => {
                    let y = self.value(NodeId(i));
                    let inner: f64 = g.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
                    let gs = acc(&mut adj, *src, y.shape());
                    for ((x, gy), yy) in gs.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *x += yy * (gy - inner);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga: Vec<f64> = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                    let shape = va.shape();
                    for (x, y) in acc(&mut adj, *a, shape).data_mut().iter_mut().zip(&ga) {
                        *x += y;
                    }
                    for (x, y) in acc(&mut adj, *b, shape).data_mut().iter_mut().zip(&gb) {
                        *x += y;
                    }
                }
                Op::RowLookup { table, rows } => {
                    let shape = self.value(*table).shape();
                    if let Op::Param(pid) = self.nodes[table.0].op {
                        let dst = sparse.entry(pid).or_default();
                        for (k, &r) in rows.iter().enumerate() {
                            let row = dst.entry(r).or_insert_with(|| vec![0.0; shape.1]);
                            for (x, y) in row.iter_mut().zip(g.row(k)) {
                                *x += y;
                            }
                        }
                    } else {
                        let gt = acc(&mut adj, *table, shape);
                        for (k, &r) in rows.iter().enumerate() {
                            for (x, y) in gt.row_mut(r).iter_mut().zip(g.row(k)) {
                                *x += y;
                            }
                        }
                    }
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let shape = va.shape();
                    let mut ga = Tensor::zeros(shape.0, shape.1);
                    let mut gb = Tensor::zeros(shape.0, shape.1);
                    for r in 0..shape.0 {
                        let gr = g.get(r, 0);
                        for c in 0..shape.1 {
                            ga.set(r, c, gr * vb.get(r, c));
                            gb.set(r, c, gr * va.get(r, c));
                        }
                    }
                    acc(&mut adj, *a, shape).add_assign(&ga);
                    acc(&mut adj, *b, shape).add_assign(&gb);
                }
                Op::Scale(src, k) => {
                    let gs = acc(&mut adj, *src, g.shape());
                    for (x, y) in gs.data_mut().iter_mut().zip(g.data()) {
                        *x += k * y;
                    }
                }
                Op::CrossEntropy { logits, gold } => {
                    let v = self.value(*logits);
                    let p = softmax(v.data());
                    let gl = g.item();
                    let gs = acc(&mut adj, *logits, v.shape());
                    for (k, (x, pk)) in gs.data_mut().iter_mut().zip(&p).enumerate() {
                        let onehot = if k == *gold { 1.0 } else { 0.0 };
                        *x += gl * (pk - onehot);
                    }
                }
                Op::Dropout { src, mask } => {
                    let gs = acc(&mut adj, *src, g.shape());
                    for ((x, y), m) in gs.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *x += y * m;
                    }
                }
            }
            adj[i] = Some(g);
        }

        let mut params = ParamGrads::empty(self.params.len());
        for (&pid, &nid) in &self.param_nodes {
            if let Some(g) = &adj[nid.0] {
                params.set(pid, Grad::Dense(g.clone()));
            }
        }
        for (pid, rows) in sparse {
            let shape = self.params.get(pid).shape();
            params.accumulate(pid, Grad::Rows { cols: shape.1, rows }, shape);
        }
        // Unreachable leaves report zero.
        for (i, node) in self.nodes.iter().enumerate() {
            if adj[i].is_none() && matches!(node.op, Op::Input | Op::Param(_)) {
                let shape = self.value(NodeId(i)).shape();
                adj[i] = Some(Tensor::zeros(shape.0, shape.1));
            }
        }
        Ok(Gradients {
            nodes: adj,
            params,
        })
    }
}

/// Result of a reverse sweep: node adjoints plus per-parameter gradients.
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: ParamGrads,
}

impl Gradients {
    /// Adjoint of a node; `None` for interior nodes not on a path to the loss.
    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes.get(id.0).and_then(Option::as_ref)
    }

    pub fn params(&self) -> &ParamGrads {
        &self.params
    }

    pub fn into_params(self) -> ParamGrads {
        self.params
    }
}
