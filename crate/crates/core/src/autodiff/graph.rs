use std::collections::HashMap;
use std::sync::Arc;

use indexmap::IndexMap;
use thiserror::Error;

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Handle to a node inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Leaves are bound by name at forward time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeafKind {
    /// Trainable; `backward` reports its gradient.
    Param,
    /// Bound input that never receives a gradient (frozen embeddings, data).
    Frozen,
}

#[derive(Clone, Debug)]
pub enum Op<T> {
    Leaf { name: String, kind: LeafKind },
    Const(Arc<Tensor<T>>),
    MatMul,
    Transpose,
    /// `a (r x c) + b (r x 1)` with `b` repeated across the columns of `a`.
    AddBroadcast,
    Add,
    Mul,
    Tanh,
    Sigmoid,
    /// Softmax over each row independently.
    Softmax,
    ConcatVertical,
    SliceColumn(usize),
    AppendZeroColumn,
    Scale(T),
    /// Natural log after clamping the argument at [`Scalar::prob_floor`].
    Log,
    Sum,
    Neg,
    /// Gathers columns of the table operand.
    EmbeddingLookup(Arc<[usize]>),
}

impl<T> Op<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Const(_) => "const",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::AddBroadcast => "add-broadcast",
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Tanh => "tanh",
            Op::Sigmoid => "sigmoid",
            Op::Softmax => "softmax",
            Op::ConcatVertical => "concat-vertical",
            Op::SliceColumn(_) => "slice-column",
            Op::AppendZeroColumn => "append-zero-column",
            Op::Scale(_) => "scale",
            Op::Log => "log",
            Op::Sum => "sum",
            Op::Neg => "neg",
            Op::EmbeddingLookup(_) => "embedding-lookup",
        }
    }
}

/// Deliberately wrong backward rules, used as a negative control for the
/// gradient checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardFault {
    /// Uses `1 - y` instead of `1 - y²` for tanh.
    Tanh,
    /// Drops the `-Σ g·y` term from the softmax rule.
    Softmax,
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("shape mismatch at node {node} ({op}): expected {expected}, got {actual}")]
    ShapeMismatch {
        node: usize,
        op: &'static str,
        expected: String,
        actual: String,
    },
    #[error("input `{0}` is not bound")]
    UnboundInput(String),
    #[error("index {index} out of range at node {node} ({op}) with {len} columns")]
    IndexOutOfRange {
        node: usize,
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("loss must be a 1x1 tensor, got {rows}x{cols}")]
    LossNotScalar { rows: usize, cols: usize },
    #[error("forward has not been run on this graph")]
    ForwardNotRun,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Name -> tensor map used to bind graph leaves.
#[derive(Clone, Debug, Default)]
pub struct Bindings<T> {
    map: HashMap<String, Arc<Tensor<T>>>,
}

impl<T: Scalar> Bindings<T> {
    pub fn new() -> Self {
        Self {
            map: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.map.insert(name.into(), Arc::new(value));
    }

    pub fn insert_shared(&mut self, name: impl Into<String>, value: Arc<Tensor<T>>) {
        self.map.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Tensor<T>>> {
        self.map.get(name)
    }
}

/// Gradients of a scalar loss with respect to every `Param` leaf, in leaf
/// creation order.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    by_name: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn into_map(self) -> IndexMap<String, Tensor<T>> {
        self.by_name
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    inputs: Vec<NodeId>,
    requires_grad: bool,
}

/// Recorded operation tape over dense tensors.
///
/// Nodes are appended in construction order, which is a topological order by
/// construction: an op can only refer to nodes that already exist. `forward`
/// evaluates every node given leaf bindings; `backward` walks the tape in
/// reverse exactly once.
#[derive(Clone, Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    leaves: HashMap<String, NodeId>,
    values: Vec<Arc<Tensor<T>>>,
    fault: Option<BackwardFault>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaves: HashMap::new(),
            values: Vec::new(),
            fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, id: NodeId) -> &Op<T> {
        &self.nodes[id.0].op
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    /// Installs a wrong backward rule. Only for exercising the gradient checker.
    pub fn inject_backward_fault(&mut self, fault: BackwardFault) {
        self.fault = Some(fault);
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<NodeId>) -> NodeId {
        let requires_grad = match &op {
            Op::Leaf { kind, .. } => *kind == LeafKind::Param,
            Op::Const(_) => false,
            _ => inputs.iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            inputs,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn leaf(&mut self, name: &str, kind: LeafKind) -> NodeId {
        if let Some(&id) = self.leaves.get(name) {
            return id;
        }
        let id = self.push(
            Op::Leaf {
                name: name.to_owned(),
                kind,
            },
            Vec::new(),
        );
        self.leaves.insert(name.to_owned(), id);
        id
    }

    /// Trainable leaf. Repeated calls with the same name return the same node.
    pub fn param(&mut self, name: &str) -> NodeId {
        self.leaf(name, LeafKind::Param)
    }

    /// Non-trainable bound leaf.
    pub fn frozen(&mut self, name: &str) -> NodeId {
        self.leaf(name, LeafKind::Frozen)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Const(Arc::new(value)), Vec::new())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul, vec![a, b])
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Transpose, vec![a])
    }

    /// `a + (column ⊗ e_n)`: the column vector repeated across every column of `a`.
    pub fn add_broadcast(&mut self, a: NodeId, column: NodeId) -> NodeId {
        self.push(Op::AddBroadcast, vec![a, column])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add, vec![a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul, vec![a, b])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh, vec![a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid, vec![a])
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Softmax, vec![a])
    }

    pub fn concat_vertical(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of zero tensors");
        self.push(Op::ConcatVertical, parts.to_vec())
    }

    pub fn slice_column(&mut self, a: NodeId, col: usize) -> NodeId {
        self.push(Op::SliceColumn(col), vec![a])
    }

    pub fn append_zero_column(&mut self, a: NodeId) -> NodeId {
        self.push(Op::AppendZeroColumn, vec![a])
    }

    pub fn scale(&mut self, a: NodeId, k: T) -> NodeId {
        self.push(Op::Scale(k), vec![a])
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Log, vec![a])
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum, vec![a])
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg, vec![a])
    }

    pub fn embedding_lookup(&mut self, table: NodeId, indices: &[usize]) -> NodeId {
        self.push(Op::EmbeddingLookup(indices.into()), vec![table])
    }

    /// Stacks column vectors side by side (`[c_1, c_2, ...]`), expressed with
    /// transpose and vertical concatenation.
    pub fn hstack_columns(&mut self, columns: &[NodeId]) -> NodeId {
        let rows: Vec<NodeId> = columns.iter().map(|&c| self.transpose(c)).collect();
        let stacked = self.concat_vertical(&rows);
        self.transpose(stacked)
    }

    /// `(name, node)` for every trainable leaf, in creation order.
    pub fn param_leaves(&self) -> Vec<(String, NodeId)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match &n.op {
                Op::Leaf {
                    name,
                    kind: LeafKind::Param,
                } => Some((name.clone(), NodeId(i))),
                _ => None,
            })
            .collect()
    }

    pub fn is_evaluated(&self) -> bool {
        !self.nodes.is_empty() && self.values.len() == self.nodes.len()
    }

    /// Value of a node after `forward`.
    pub fn value(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.values.get(id.0).map(|v| v.as_ref())
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> Option<T> {
        self.value(id).filter(|t| t.shape() == (1, 1)).map(|t| t.data()[0])
    }

    /// Evaluates every node in tape order.
    pub fn forward(&mut self, bindings: &Bindings<T>) -> Result<(), GraphError> {
        let mut values: Vec<Arc<Tensor<T>>> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let value = eval_node(idx, node, &values, bindings)?;
            values.push(value);
        }
        self.values = values;
        Ok(())
    }

    /// Reverse sweep from a 1x1 loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>, GraphError> {
        if !self.is_evaluated() {
            return Err(GraphError::ForwardNotRun);
        }
        let loss_value = &self.values[loss.0];
        if loss_value.shape() != (1, 1) {
            return Err(GraphError::LossNotScalar {
                rows: loss_value.rows(),
                cols: loss_value.cols(),
            });
        }

        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf { .. } = node.op {
                // Put it back: leaves are read out below.
                grads[idx] = Some(g);
                continue;
            }
            self.backprop_node(idx, &g, &mut grads);
        }

        let mut by_name = IndexMap::new();
        for (name, id) in self.param_leaves() {
            let shape = self.values[id.0].shape();
            let g = grads
                .get_mut(id.0)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1));
            by_name.insert(name, g);
        }
        Ok(Gradients { by_name })
    }

    fn backprop_node(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[idx];
        let y = &self.values[idx];
        let input = |k: usize| -> &Tensor<T> { &self.values[node.inputs[k].0] };
        let needs = |k: usize| self.nodes[node.inputs[k].0].requires_grad;
        let send = |grads: &mut [Option<Tensor<T>>], k: usize, delta: Tensor<T>| {
            let target = node.inputs[k].0;
            match &mut grads[target] {
                Some(acc) => acc.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };

        match &node.op {
            Op::Leaf { .. } | Op::Const(_) => {}
            Op::MatMul => {
                if needs(0) {
                    send(grads, 0, g.matmul_t(input(1)));
                }
                if needs(1) {
                    send(grads, 1, input(0).t_matmul(g));
                }
            }
            Op::Transpose => send(grads, 0, g.transpose()),
            Op::AddBroadcast => {
                if needs(0) {
                    send(grads, 0, g.clone());
                }
                if needs(1) {
                    let sums = (0..g.rows()).map(|r| g.row_values(r).iter().copied().sum());
                    send(grads, 1, Tensor::column(sums.collect()));
                }
            }
            Op::Add => {
                if needs(0) {
                    send(grads, 0, g.clone());
                }
                if needs(1) {
                    send(grads, 1, g.clone());
                }
            }
            Op::Mul => {
                if needs(0) {
                    send(grads, 0, g.zip_map(input(1), |a, b| a * b));
                }
                if needs(1) {
                    send(grads, 1, g.zip_map(input(0), |a, b| a * b));
                }
            }
            Op::Tanh => {
                let d = if self.fault == Some(BackwardFault::Tanh) {
                    g.zip_map(y, |g, y| g * (T::one() - y))
                } else {
                    g.zip_map(y, |g, y| g * (T::one() - y * y))
                };
                send(grads, 0, d);
            }
            Op::Sigmoid => send(grads, 0, g.zip_map(y, |g, y| g * y * (T::one() - y))),
            Op::Softmax => {
                let mut d = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row_values(r);
                    let gr = g.row_values(r);
                    let dot: T = if self.fault == Some(BackwardFault::Softmax) {
                        T::zero()
                    } else {
                        yr.iter().zip(gr).map(|(&a, &b)| a * b).sum()
                    };
                    for c in 0..y.cols() {
                        d.set(r, c, yr[c] * (gr[c] - dot));
                    }
                }
                send(grads, 0, d);
            }
            Op::ConcatVertical => {
                let cols = g.cols();
                let mut row = 0;
                for k in 0..node.inputs.len() {
                    let rows = input(k).rows();
                    if needs(k) {
                        let part = g.data()[row * cols..(row + rows) * cols].to_vec();
                        send(grads, k, Tensor::new(rows, cols, part));
                    }
                    row += rows;
                }
            }
            Op::SliceColumn(col) => {
                let src = input(0);
                let mut d = Tensor::zeros(src.rows(), src.cols());
                for r in 0..src.rows() {
                    d.set(r, *col, g.get(r, 0));
                }
                send(grads, 0, d);
            }
            Op::AppendZeroColumn => {
                let src = input(0);
                send(
                    grads,
                    0,
                    Tensor::from_fn(src.rows(), src.cols(), |r, c| g.get(r, c)),
                );
            }
            Op::Scale(k) => send(grads, 0, g.map(|v| v * *k)),
            Op::Log => {
                let floor = T::prob_floor();
                let d = g.zip_map(input(0), |g, x| if x > floor { g / x } else { T::zero() });
                send(grads, 0, d);
            }
            Op::Sum => {
                let src = input(0);
                send(grads, 0, Tensor::filled(src.rows(), src.cols(), g.data()[0]));
            }
            Op::Neg => send(grads, 0, g.map(|v| -v)),
            Op::EmbeddingLookup(indices) => {
                // Frozen tables never get here: requires_grad is false for them.
                let table = input(0);
                let mut d = Tensor::zeros(table.rows(), table.cols());
                for (pos, &word) in indices.iter().enumerate() {
                    for r in 0..table.rows() {
                        d.set(r, word, d.get(r, word) + g.get(r, pos));
                    }
                }
                send(grads, 0, d);
            }
        }
    }
}

fn shape_str(shape: (usize, usize)) -> String {
    format!("{}x{}", shape.0, shape.1)
}

fn eval_node<T: Scalar>(
    idx: usize,
    node: &Node<T>,
    values: &[Arc<Tensor<T>>],
    bindings: &Bindings<T>,
) -> Result<Arc<Tensor<T>>, GraphError> {
    let op = node.op.name();
    let arg = |k: usize| -> &Tensor<T> { &values[node.inputs[k].0] };
    let mismatch = |expected: String, actual: (usize, usize)| GraphError::ShapeMismatch {
        node: idx,
        op,
        expected,
        actual: shape_str(actual),
    };

    let out = match &node.op {
        Op::Leaf { name, .. } => {
            return bindings
                .get(name)
                .cloned()
                .ok_or_else(|| GraphError::UnboundInput(name.clone()));
        }
        Op::Const(t) => return Ok(Arc::clone(t)),
        Op::MatMul => {
            let (a, b) = (arg(0), arg(1));
            if a.cols() != b.rows() {
                return Err(mismatch(format!("{}x_", a.cols()), b.shape()));
            }
            a.matmul(b)
        }
        Op::Transpose => arg(0).transpose(),
        Op::AddBroadcast => {
            let (a, b) = (arg(0), arg(1));
            if b.shape() != (a.rows(), 1) {
                return Err(mismatch(format!("{}x1", a.rows()), b.shape()));
            }
            let mut out = a.clone();
            for r in 0..a.rows() {
                let add = b.data()[r];
                for c in 0..a.cols() {
                    out.set(r, c, a.get(r, c) + add);
                }
            }
            out
        }
        Op::Add | Op::Mul => {
            let (a, b) = (arg(0), arg(1));
            if a.shape() != b.shape() {
                return Err(mismatch(shape_str(a.shape()), b.shape()));
            }
            if matches!(node.op, Op::Add) {
                a.zip_map(b, |x, y| x + y)
            } else {
                a.zip_map(b, |x, y| x * y)
            }
        }
        Op::Tanh => arg(0).map(|v| v.tanh()),
        Op::Sigmoid => arg(0).map(sigmoid),
        Op::Softmax => softmax_rows(arg(0)),
        Op::ConcatVertical => {
            let cols = arg(0).cols();
            let mut data = Vec::new();
            let mut rows = 0;
            for k in 0..node.inputs.len() {
                let part = arg(k);
                if part.cols() != cols {
                    return Err(mismatch(format!("_x{cols}"), part.shape()));
                }
                rows += part.rows();
                data.extend_from_slice(part.data());
            }
            Tensor::new(rows, cols, data)
        }
        Op::SliceColumn(col) => {
            let a = arg(0);
            if *col >= a.cols() {
                return Err(GraphError::IndexOutOfRange {
                    node: idx,
                    op,
                    index: *col,
                    len: a.cols(),
                });
            }
            Tensor::column(a.column_values(*col))
        }
        Op::AppendZeroColumn => {
            let a = arg(0);
            Tensor::from_fn(a.rows(), a.cols() + 1, |r, c| {
                if c < a.cols() {
                    a.get(r, c)
                } else {
                    T::zero()
                }
            })
        }
        Op::Scale(k) => arg(0).map(|v| v * *k),
        Op::Log => {
            let floor = T::prob_floor();
            arg(0).map(|v| v.max(floor).ln())
        }
        Op::Sum => Tensor::scalar(arg(0).sum()),
        Op::Neg => arg(0).map(|v| -v),
        Op::EmbeddingLookup(indices) => {
            let table = arg(0);
            if let Some(&bad) = indices.iter().find(|&&i| i >= table.cols()) {
                return Err(GraphError::IndexOutOfRange {
                    node: idx,
                    op,
                    index: bad,
                    len: table.cols(),
                });
            }
            Tensor::from_fn(table.rows(), indices.len(), |r, c| table.get(r, indices[c]))
        }
    };
    Ok(Arc::new(out))
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let mut out = a.clone();
    for r in 0..a.rows() {
        let row = a.row_values(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        for (c, e) in exps.into_iter().enumerate() {
            out.set(r, c, e / total);
        }
    }
    out
}
