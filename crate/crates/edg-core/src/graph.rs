//! Reverse-mode automatic differentiation over an append-only operation tape,
//! with support for gradients of gradients.
//!
//! Every public op evaluates eagerly (the node stores its forward value) and
//! records a local-derivative rule. `backward` walks the tape in reverse and
//! *emits the vector-Jacobian products as ordinary ops on the same tape*, so
//! the op set is closed under differentiation:
//!
//! - with `create_graph = true` the emitted gradient subgraph persists and a
//!   subsequent `backward` over it yields second-order terms (this is what
//!   lets the outer meta-update differentiate through the inner adaptation);
//! - with `create_graph = false` the gradient values are snapshotted, the
//!   tape is truncated back to its pre-backward length, and the gradients are
//!   re-inserted as constant inputs — downstream code sees the same `NodeId`
//!   interface, but no derivative flows through them (first-order mode).
//!
//! A backward pass prunes to the subgraph that can reach a `wrt` parameter,
//! so a small inner-loop backward on a large episode tape stays cheap.

use crate::error::{EdgError, Result};
use crate::tensor::{self, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Matmul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    ScalarMul(f64),
    ScalarAdd(f64),
    Relu,
    GtZeroMask,
    Tanh,
    Exp,
    Log,
    Softmax,
    LogSoftmax,
    Sum,
    Mean,
    SumCols,
    BcastCols(usize),
    SumAxis0,
    BcastRows(usize),
    ScalarBcast(Vec<usize>),
    PickRow(Vec<usize>),
    ScatterRow(Vec<usize>, usize),
    Concat0,
    SliceRows(usize, usize),
    PadRows(usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Matmul => "matmul",
            Op::Transpose => "transpose",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::ScalarMul(_) => "scalar_mul",
            Op::ScalarAdd(_) => "scalar_add",
            Op::Relu => "relu",
            Op::GtZeroMask => "gt_zero_mask",
            Op::Tanh => "tanh",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Softmax => "softmax",
            Op::LogSoftmax => "log_softmax",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumCols => "sum_cols",
            Op::BcastCols(_) => "bcast_cols",
            Op::SumAxis0 => "sum_axis0",
            Op::BcastRows(_) => "bcast_rows",
            Op::ScalarBcast(_) => "scalar_bcast",
            Op::PickRow(_) => "pick_row",
            Op::ScatterRow(_, _) => "scatter_row",
            Op::Concat0 => "concat0",
            Op::SliceRows(_, _) => "slice_rows",
            Op::PadRows(_, _) => "pad_rows",
        }
    }
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    generation: u64,
}

/// Append-only computation tape. One graph per training run/episode;
/// construction and backward are single-threaded (tensors detached from any
/// graph are immutable values, safe to share across threads).
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    generation: u64,
}

/// Gradients from one `backward` call: parameter handle -> gradient handle
/// (gradient tensors live on the graph so that second-order passes can keep
/// differentiating them).
#[derive(Clone, Debug)]
pub struct GradMap {
    pairs: Vec<(NodeId, NodeId)>,
}

impl GradMap {
    pub fn grad(&self, param: NodeId) -> Option<NodeId> {
        self.pairs.iter().find(|(p, _)| *p == param).map(|(_, g)| *g)
    }

    pub fn grad_value<'g>(&self, g: &'g Graph, param: NodeId) -> Result<&'g Tensor> {
        let id = self.grad(param).ok_or(EdgError::MissingGrad {
            index: param.0,
            name: format!("node {}", param.0),
        })?;
        g.value_checked(id)
    }

    /// Gradient handles in `wrt` order.
    pub fn grads(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.pairs.iter().map(|(_, g)| *g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Monotone counter; bumps once per backward pass, distinguishing the
    /// first-order tape from re-taped higher-order passes.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Generation at which a node was recorded (0 = original forward tape,
    /// k > 0 = emitted during the k-th backward pass).
    pub fn node_generation(&self, id: NodeId) -> u64 {
        self.nodes[id.0].generation
    }

    /// Human-readable description of a node (op, attributes, inputs, shape).
    pub fn describe_node(&self, id: NodeId) -> String {
        let n = &self.nodes[id.0];
        let attrs = match &n.op {
            Op::ScalarMul(c) => format!("(c={c})"),
            Op::ScalarAdd(c) => format!("(c={c})"),
            Op::BcastCols(n) => format!("(n={n})"),
            Op::BcastRows(m) => format!("(m={m})"),
            Op::ScalarBcast(s) => format!("(shape={s:?})"),
            Op::PickRow(l) => format!("(labels={})", l.len()),
            Op::ScatterRow(l, k) => format!("(labels={}, k={k})", l.len()),
            Op::SliceRows(a, b) => format!("(rows={a}..{b})"),
            Op::PadRows(at, m) => format!("(at={at}, rows={m})"),
            _ => String::new(),
        };
        format!(
            "#{} {}{} inputs={:?} shape={:?} gen={}",
            id.0,
            n.op.name(),
            attrs,
            n.inputs.iter().map(|i| i.0).collect::<Vec<_>>(),
            n.value.shape(),
            n.generation
        )
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn value_checked(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes.get(id.0).map(|n| &n.value).ok_or(EdgError::HandleNotOnGraph {
            id: id.0,
            len: self.nodes.len(),
        })
    }

    fn check_on_graph(&self, ids: &[NodeId]) -> Result<()> {
        for id in ids {
            if id.0 >= self.nodes.len() {
                return Err(EdgError::HandleNotOnGraph {
                    id: id.0,
                    len: self.nodes.len(),
                });
            }
        }
        Ok(())
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(EdgError::NonFinite { op: op.name() });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            inputs,
            value,
            generation: self.generation,
        });
        Ok(id)
    }

    /// Register a leaf tensor (parameter or constant).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op: Op::Input,
            inputs: vec![],
            value,
            generation: self.generation,
        });
        id
    }

    /// Alias for `input`, used where the intent is a non-trainable constant.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.input(value)
    }

    // -- recorded operations ------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[a, b])?;
        let v = tensor::matmul(self.value(a), self.value(b))?;
        self.push(Op::Matmul, vec![a, b], v)
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::transpose(self.value(x))?;
        self.push(Op::Transpose, vec![x], v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[a, b])?;
        let v = tensor::add(self.value(a), self.value(b))?;
        self.push(Op::Add, vec![a, b], v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[a, b])?;
        let v = tensor::sub(self.value(a), self.value(b))?;
        self.push(Op::Sub, vec![a, b], v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[a, b])?;
        let v = tensor::mul(self.value(a), self.value(b))?;
        self.push(Op::Mul, vec![a, b], v)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[a, b])?;
        let v = tensor::div(self.value(a), self.value(b))?;
        self.push(Op::Div, vec![a, b], v)
    }

    pub fn scalar_mul(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::scalar_mul(self.value(x), c);
        self.push(Op::ScalarMul(c), vec![x], v)
    }

    pub fn scalar_add(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::scalar_add(self.value(x), c);
        self.push(Op::ScalarAdd(c), vec![x], v)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::relu(self.value(x));
        self.push(Op::Relu, vec![x], v)
    }

    pub fn gt_zero_mask(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::gt_zero_mask(self.value(x));
        self.push(Op::GtZeroMask, vec![x], v)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::tanh(self.value(x));
        self.push(Op::Tanh, vec![x], v)
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::exp(self.value(x));
        self.push(Op::Exp, vec![x], v)
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::log(self.value(x));
        self.push(Op::Log, vec![x], v)
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::softmax(self.value(x))?;
        self.push(Op::Softmax, vec![x], v)
    }

    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::log_softmax(self.value(x))?;
        self.push(Op::LogSoftmax, vec![x], v)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::sum(self.value(x));
        self.push(Op::Sum, vec![x], v)
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::mean(self.value(x));
        self.push(Op::Mean, vec![x], v)
    }

    pub fn sum_cols(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::sum_cols(self.value(x))?;
        self.push(Op::SumCols, vec![x], v)
    }

    pub fn bcast_cols(&mut self, x: NodeId, n: usize) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::bcast_cols(self.value(x), n)?;
        self.push(Op::BcastCols(n), vec![x], v)
    }

    pub fn sum_axis0(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::sum_axis0(self.value(x))?;
        self.push(Op::SumAxis0, vec![x], v)
    }

    pub fn bcast_rows(&mut self, x: NodeId, m: usize) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::bcast_rows(self.value(x), m)?;
        self.push(Op::BcastRows(m), vec![x], v)
    }

    pub fn scalar_bcast(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::scalar_bcast(self.value(x), shape)?;
        self.push(Op::ScalarBcast(shape.to_vec()), vec![x], v)
    }

    pub fn pick_row(&mut self, x: NodeId, labels: &[usize]) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::pick_row(self.value(x), labels)?;
        self.push(Op::PickRow(labels.to_vec()), vec![x], v)
    }

    pub fn scatter_row(&mut self, x: NodeId, labels: &[usize], k: usize) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::scatter_row(self.value(x), labels, k)?;
        self.push(Op::ScatterRow(labels.to_vec(), k), vec![x], v)
    }

    pub fn concat0(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.check_on_graph(parts)?;
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = tensor::concat0(&vals)?;
        self.push(Op::Concat0, parts.to_vec(), v)
    }

    pub fn slice_rows(&mut self, x: NodeId, a: usize, b: usize) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::slice_rows(self.value(x), a, b)?;
        self.push(Op::SliceRows(a, b), vec![x], v)
    }

    pub fn pad_rows(&mut self, x: NodeId, at: usize, total_rows: usize) -> Result<NodeId> {
        self.check_on_graph(&[x])?;
        let v = tensor::pad_rows(self.value(x), at, total_rows)?;
        self.push(Op::PadRows(at, total_rows), vec![x], v)
    }

    // -- backward ------------------------------------------------------------

    /// Reverse-mode gradients of a scalar `loss` with respect to `wrt`.
    ///
    /// Each tape node is visited at most once; the VJP rules are emitted into
    /// the pruned subgraph that reaches a `wrt` handle. See the module docs
    /// for the `create_graph` semantics.
    pub fn backward(&mut self, loss: NodeId, wrt: &[NodeId], create_graph: bool) -> Result<GradMap> {
        self.check_on_graph(wrt)?;
        let loss_value = self.value_checked(loss)?;
        if !loss_value.is_scalar() {
            return Err(EdgError::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let n0 = self.nodes.len();

        // Nodes from which some wrt parameter is reachable (going backward).
        let mut reach = vec![false; n0];
        for w in wrt {
            reach[w.0] = true;
        }
        for i in 0..n0 {
            if !reach[i] {
                reach[i] = self.nodes[i].inputs.iter().any(|j| reach[j.0]);
            }
        }

        self.generation += 1;
        let mut adj: Vec<Option<NodeId>> = vec![None; n0];
        let seed = self.input(Tensor::scalar(1.0));
        adj[loss.0] = Some(seed);

        for i in (0..=loss.0).rev() {
            let Some(a) = adj[i] else { continue };
            if !reach[i] {
                continue;
            }
            let contribs = self.vjp(i, a)?;
            for (j, contrib) in contribs {
                if !reach[j.0] {
                    continue;
                }
                adj[j.0] = Some(match adj[j.0] {
                    Some(prev) => self.add(prev, contrib)?,
                    None => contrib,
                });
            }
        }

        let mut pairs = Vec::with_capacity(wrt.len());
        if create_graph {
            for &w in wrt {
                let g = match adj[w.0] {
                    Some(g) => g,
                    None => {
                        let shape = self.value(w).shape().to_vec();
                        self.input(Tensor::zeros(&shape))
                    }
                };
                debug_assert_eq!(self.value(g).shape(), self.value(w).shape());
                pairs.push((w, g));
            }
        } else {
            let grads: Vec<Tensor> = wrt
                .iter()
                .map(|w| match adj[w.0] {
                    Some(g) => self.value(g).clone(),
                    None => Tensor::zeros(self.value(*w).shape()),
                })
                .collect();
            self.nodes.truncate(n0);
            for (&w, g) in wrt.iter().zip(grads) {
                debug_assert_eq!(g.shape(), self.value(w).shape());
                let gid = self.input(g);
                pairs.push((w, gid));
            }
        }
        Ok(GradMap { pairs })
    }

    /// Emit the vector-Jacobian product of node `i` given its output adjoint,
    /// returning (input id, adjoint contribution) pairs.
    fn vjp(&mut self, i: usize, adj: NodeId) -> Result<Vec<(NodeId, NodeId)>> {
        let op = self.nodes[i].op.clone();
        let inputs = self.nodes[i].inputs.clone();
        let out_id = NodeId(i);
        let mut res = Vec::new();
        match op {
            Op::Input | Op::GtZeroMask => {}
            Op::Matmul => {
                let (a, b) = (inputs[0], inputs[1]);
                let bt = self.transpose(b)?;
                res.push((a, self.matmul(adj, bt)?));
                let at = self.transpose(a)?;
                res.push((b, self.matmul(at, adj)?));
            }
            Op::Transpose => {
                res.push((inputs[0], self.transpose(adj)?));
            }
            Op::Add => {
                res.push((inputs[0], adj));
                res.push((inputs[1], adj));
            }
            Op::Sub => {
                res.push((inputs[0], adj));
                res.push((inputs[1], self.scalar_mul(adj, -1.0)?));
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                res.push((a, self.mul(adj, b)?));
                res.push((b, self.mul(adj, a)?));
            }
            Op::Div => {
                let (a, b) = (inputs[0], inputs[1]);
                res.push((a, self.div(adj, b)?));
                // d/db (a/b) = -a/b^2 = -out/b
                let t = self.div(out_id, b)?;
                let t = self.mul(adj, t)?;
                res.push((b, self.scalar_mul(t, -1.0)?));
            }
            Op::ScalarMul(c) => {
                res.push((inputs[0], self.scalar_mul(adj, c)?));
            }
            Op::ScalarAdd(_) => {
                res.push((inputs[0], adj));
            }
            Op::Relu => {
                let m = self.gt_zero_mask(inputs[0])?;
                res.push((inputs[0], self.mul(adj, m)?));
            }
            Op::Tanh => {
                // 1 - tanh^2, built from the cached output.
                let y2 = self.mul(out_id, out_id)?;
                let neg = self.scalar_mul(y2, -1.0)?;
                let one_minus = self.scalar_add(neg, 1.0)?;
                res.push((inputs[0], self.mul(adj, one_minus)?));
            }
            Op::Exp => {
                res.push((inputs[0], self.mul(adj, out_id)?));
            }
            Op::Log => {
                res.push((inputs[0], self.div(adj, inputs[0])?));
            }
            Op::Softmax => {
                // dx = y * (adj - rowsum(adj * y))
                let n = self.value(out_id).view_cols();
                let ay = self.mul(adj, out_id)?;
                let s = self.sum_cols(ay)?;
                let sb = self.bcast_cols(s, n)?;
                let centered = self.sub(adj, sb)?;
                res.push((inputs[0], self.mul(out_id, centered)?));
            }
            Op::LogSoftmax => {
                // dx = adj - softmax(x) * rowsum(adj)
                let n = self.value(out_id).view_cols();
                let sm = self.softmax(inputs[0])?;
                let s = self.sum_cols(adj)?;
                let sb = self.bcast_cols(s, n)?;
                let t = self.mul(sm, sb)?;
                res.push((inputs[0], self.sub(adj, t)?));
            }
            Op::Sum => {
                let shape = self.value(inputs[0]).shape().to_vec();
                res.push((inputs[0], self.scalar_bcast(adj, &shape)?));
            }
            Op::Mean => {
                let shape = self.value(inputs[0]).shape().to_vec();
                let numel = self.value(inputs[0]).len() as f64;
                let b = self.scalar_bcast(adj, &shape)?;
                res.push((inputs[0], self.scalar_mul(b, 1.0 / numel)?));
            }
            Op::SumCols => {
                let n = self.value(inputs[0]).view_cols();
                res.push((inputs[0], self.bcast_cols(adj, n)?));
            }
            Op::BcastCols(_) => {
                res.push((inputs[0], self.sum_cols(adj)?));
            }
            Op::SumAxis0 => {
                let m = self.value(inputs[0]).shape()[0];
                res.push((inputs[0], self.bcast_rows(adj, m)?));
            }
            Op::BcastRows(_) => {
                res.push((inputs[0], self.sum_axis0(adj)?));
            }
            Op::ScalarBcast(_) => {
                res.push((inputs[0], self.sum(adj)?));
            }
            Op::PickRow(labels) => {
                let k = self.value(inputs[0]).shape()[1];
                res.push((inputs[0], self.scatter_row(adj, &labels, k)?));
            }
            Op::ScatterRow(labels, _) => {
                res.push((inputs[0], self.pick_row(adj, &labels)?));
            }
            Op::Concat0 => {
                let mut at = 0;
                for &p in &inputs {
                    let rows = self.value(p).shape()[0];
                    res.push((p, self.slice_rows(adj, at, at + rows)?));
                    at += rows;
                }
            }
            Op::SliceRows(a, _) => {
                let total = self.value(inputs[0]).shape()[0];
                res.push((inputs[0], self.pad_rows(adj, a, total)?));
            }
            Op::PadRows(at, _) => {
                let rows = self.value(inputs[0]).shape()[0];
                res.push((inputs[0], self.slice_rows(adj, at, at + rows)?));
            }
        }
        Ok(res)
    }
}

/// Report from [`finite_diff_check`].
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    /// max over coordinates of |analytic - central| / max(1, |central|)
    pub max_rel_err: f64,
    pub worst_param: usize,
    pub worst_coord: usize,
}

/// Compare reverse-mode gradients against central finite differences.
///
/// `build` must deterministically construct a scalar loss from the given
/// parameter nodes on a fresh graph. `eps` must lie in (0, 1e-2]. Coordinates
/// where the two one-sided slopes disagree badly (a kink, e.g. a relu
/// boundary) are reported as `NonSmooth` instead of producing a bogus
/// comparison.
pub fn finite_diff_check<F>(build: F, params: &[Tensor], eps: f64) -> Result<FdReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(EdgError::InvalidArg(format!(
            "finite_diff_check: eps must be in (0, 1e-2], got {eps}"
        )));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| g.input(p.clone())).collect();
        let loss = build(&mut g, &ids)?;
        let v = g.value_checked(loss)?;
        if !v.is_scalar() {
            return Err(EdgError::NonScalarLoss {
                shape: v.shape().to_vec(),
            });
        }
        let out = v.item();
        if !out.is_finite() {
            return Err(EdgError::NonFinite {
                op: "finite_diff_check",
            });
        }
        Ok(out)
    };

    // Analytic gradients.
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.input(p.clone())).collect();
    let loss = build(&mut g, &ids)?;
    let gm = g.backward(loss, &ids, false)?;
    let analytic: Vec<Tensor> = ids
        .iter()
        .map(|&id| gm.grad_value(&g, id).cloned())
        .collect::<Result<_>>()?;
    let f0 = g.value(loss).item();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst_param: 0,
        worst_coord: 0,
    };
    for pi in 0..params.len() {
        for c in 0..params[pi].len() {
            let orig = work[pi].data()[c];
            work[pi].data_mut()[c] = orig + eps;
            let fp = eval(&work)?;
            work[pi].data_mut()[c] = orig - eps;
            let fm = eval(&work)?;
            work[pi].data_mut()[c] = orig;

            let central = (fp - fm) / (2.0 * eps);
            let fwd = (fp - f0) / eps;
            let bwd = (f0 - fm) / eps;
            if (fwd - bwd).abs() > 0.05 * f64::max(1.0, central.abs()) + 1e-7 {
                return Err(EdgError::NonSmooth {
                    param: pi,
                    coord: c,
                    left: bwd,
                    right: fwd,
                });
            }
            let rel = (analytic[pi].data()[c] - central).abs() / f64::max(1.0, central.abs());
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = pi;
                report.worst_coord = c;
            }
        }
    }
    Ok(report)
}


#[cfg(test)]
impl Graph {
    /// Test helper: gradient value of `p` as f64 (scalar grads only).
    fn grad_of(&self, gm: &GradMap, p: NodeId) -> f64 {
        self.value(gm.grad(p).unwrap()).item()
    }
}
