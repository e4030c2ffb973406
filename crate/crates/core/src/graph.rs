//! Append-only computation graph with lazily cached forward values and
//! reverse-mode gradients.
//!
//! Node ids are dense and creation-ordered, and every input id is smaller
//! than the id of the node that uses it, so the arena is a DAG in topological
//! order by construction. Beam search relies on this: many executions append
//! to one graph and earlier [`NodeRef`]s never move.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{self, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("{kind} expects {expected} inputs, got {got}")]
    Arity {
        kind: &'static str,
        expected: &'static str,
        got: usize,
    },
    #[error("node {0} does not exist in this graph")]
    UnknownNode(usize),
    #[error("seed for node {node} has shape {got:?}, node value has shape {expected:?}")]
    SeedShape {
        node: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("node {0} was seeded before its forward value was computed")]
    Unevaluated(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef(usize);

impl NodeRef {
    pub fn id(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Parameter(String),
    Constant(Tensor),
    /// `inputs[0]` (rank 2) times `inputs[1]` (rank 1).
    MatVec,
    Add,
    Tanh,
    Concat,
    /// Column-wise max over any number of rank-1 inputs of length `width`.
    MaxPool { width: usize },
    IndexScalar(usize),
}

impl NodeKind {
    fn name(&self) -> &'static str {
        match self {
            NodeKind::Parameter(_) => "parameter",
            NodeKind::Constant(_) => "constant",
            NodeKind::MatVec => "matvec",
            NodeKind::Add => "add",
            NodeKind::Tanh => "tanh",
            NodeKind::Concat => "concat",
            NodeKind::MaxPool { .. } => "maxpool",
            NodeKind::IndexScalar(_) => "index_scalar",
        }
    }

    fn check_arity(&self, got: usize) -> Result<(), GraphError> {
        let (ok, expected) = match self {
            NodeKind::Parameter(_) | NodeKind::Constant(_) => (got == 0, "0"),
            NodeKind::MatVec | NodeKind::Add => (got == 2, "2"),
            NodeKind::Tanh | NodeKind::IndexScalar(_) => (got == 1, "1"),
            NodeKind::Concat => (got >= 1, "at least 1"),
            NodeKind::MaxPool { .. } => (true, "any number of"),
        };
        if ok {
            Ok(())
        } else {
            Err(GraphError::Arity {
                kind: self.name(),
                expected,
                got,
            })
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    kind: NodeKind,
    inputs: Vec<NodeRef>,
    value: Option<Tensor>,
    /// Whether any parameter is an ancestor (or the node itself).
    needs_grad: bool,
}

/// Per-parameter gradient tensors, merged associatively by addition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients(BTreeMap<String, Tensor>);

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.0.iter()
    }

    pub fn add(&mut self, name: &str, g: &Tensor, alpha: f64) -> Result<(), GraphError> {
        match self.0.get_mut(name) {
            Some(acc) => acc.axpy(alpha, g)?,
            None => {
                self.0.insert(name.to_string(), g.scale(alpha));
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Gradients) -> Result<(), GraphError> {
        for (name, g) in &other.0 {
            self.add(name, g, 1.0)?;
        }
        Ok(())
    }
}

/// Named parameter tensors plus their accumulated gradients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
    #[serde(skip)]
    gradients: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a parameter; its gradient is reset to zero.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        self.gradients
            .insert(name.clone(), Tensor::zeros(value.shape()));
        self.entries.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn gradient(&self, name: &str) -> Option<&Tensor> {
        self.gradients.get(name)
    }

    pub fn accumulate(&mut self, grads: &Gradients) -> Result<(), GraphError> {
        for (name, g) in grads.iter() {
            let acc = self
                .gradients
                .get_mut(name)
                .ok_or_else(|| GraphError::UnknownParameter(name.clone()))?;
            acc.axpy(1.0, g)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for g in self.gradients.values_mut() {
            g.values_mut().fill(0.0);
        }
    }

    /// Calls `f(name, value, gradient)` for every parameter.
    pub fn update(&mut self, mut f: impl FnMut(&str, &mut Tensor, &Tensor)) {
        for (name, value) in self.entries.iter_mut() {
            let grad = self
                .gradients
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(value.shape()));
            f(name, value, grad);
        }
    }

    /// Restores zero gradients for every entry, e.g. after deserializing.
    pub fn reset_gradients(&mut self) {
        self.gradients = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
            .collect();
    }
}

/// One computation graph over a borrowed parameter set.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    evaluations: usize,
    shared: HashMap<String, NodeRef>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            evaluations: 0,
            shared: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of kernel evaluations performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn add_node(&mut self, kind: NodeKind, inputs: &[NodeRef]) -> Result<NodeRef, GraphError> {
        kind.check_arity(inputs.len())?;
        for input in inputs {
            if input.0 >= self.nodes.len() {
                return Err(GraphError::UnknownNode(input.0));
            }
        }
        if let NodeKind::Parameter(name) = &kind {
            if !self.params.contains(name) {
                return Err(GraphError::UnknownParameter(name.clone()));
            }
        }
        if let NodeKind::IndexScalar(i) = kind {
            if let Some(v) = &self.nodes[inputs[0].0].value {
                if i >= v.len() {
                    return Err(TensorError::IndexOutOfRange {
                        index: i,
                        len: v.len(),
                    }
                    .into());
                }
            }
        }
        let needs_grad = matches!(kind, NodeKind::Parameter(_))
            || inputs.iter().any(|r| self.nodes[r.0].needs_grad);
        let id = self.nodes.len();
        self.nodes.push(Node {
            kind,
            inputs: inputs.to_vec(),
            value: None,
            needs_grad,
        });
        Ok(NodeRef(id))
    }

    /// The node built earlier under `key`, or a new one from `build`.
    pub fn shared<E>(
        &mut self,
        key: &str,
        build: impl FnOnce(&mut Self) -> Result<NodeRef, E>,
    ) -> Result<NodeRef, E> {
        if let Some(&node) = self.shared.get(key) {
            return Ok(node);
        }
        let node = build(self)?;
        self.shared.insert(key.to_string(), node);
        Ok(node)
    }

    pub fn parameter(&mut self, name: &str) -> Result<NodeRef, GraphError> {
        self.add_node(NodeKind::Parameter(name.to_string()), &[])
    }

    pub fn constant(&mut self, t: Tensor) -> NodeRef {
        self.add_node(NodeKind::Constant(t), &[])
            .expect("constants take no inputs")
    }

    pub fn matvec(&mut self, a: NodeRef, x: NodeRef) -> Result<NodeRef, GraphError> {
        self.add_node(NodeKind::MatVec, &[a, x])
    }

    pub fn add(&mut self, a: NodeRef, b: NodeRef) -> Result<NodeRef, GraphError> {
        self.add_node(NodeKind::Add, &[a, b])
    }

    pub fn tanh(&mut self, a: NodeRef) -> Result<NodeRef, GraphError> {
        self.add_node(NodeKind::Tanh, &[a])
    }

    pub fn concat(&mut self, parts: &[NodeRef]) -> Result<NodeRef, GraphError> {
        self.add_node(NodeKind::Concat, parts)
    }

    pub fn maxpool(&mut self, rows: &[NodeRef], width: usize) -> Result<NodeRef, GraphError> {
        self.add_node(NodeKind::MaxPool { width }, rows)
    }

    pub fn index_scalar(&mut self, node: NodeRef, i: usize) -> Result<NodeRef, GraphError> {
        self.add_node(NodeKind::IndexScalar(i), &[node])
    }

    /// Cached value of `node`, if it has been evaluated.
    pub fn value(&self, node: NodeRef) -> Option<&Tensor> {
        self.nodes.get(node.0).and_then(|n| n.value.as_ref())
    }

    /// Evaluates every uncached ancestor of `node`, then `node` itself.
    pub fn forward(&mut self, node: NodeRef) -> Result<&Tensor, GraphError> {
        if node.0 >= self.nodes.len() {
            return Err(GraphError::UnknownNode(node.0));
        }
        let mut pending = Vec::new();
        let mut stack = vec![node.0];
        let mut seen = std::collections::HashSet::new();
        while let Some(id) = stack.pop() {
            if self.nodes[id].value.is_some() || !seen.insert(id) {
                continue;
            }
            pending.push(id);
            stack.extend(self.nodes[id].inputs.iter().map(|r| r.0));
        }
        pending.sort_unstable();
        for id in pending {
            let value = self.evaluate(id)?;
            self.evaluations += 1;
            self.nodes[id].value = Some(value);
        }
        Ok(self.nodes[node.0].value.as_ref().expect("just evaluated"))
    }

    fn input_value(&self, id: usize, k: usize) -> &Tensor {
        let r = self.nodes[id].inputs[k];
        self.nodes[r.0]
            .value
            .as_ref()
            .expect("inputs are evaluated before their users")
    }

    fn evaluate(&self, id: usize) -> Result<Tensor, GraphError> {
        let node = &self.nodes[id];
        let out = match &node.kind {
            NodeKind::Parameter(name) => self
                .params
                .get(name)
                .cloned()
                .ok_or_else(|| GraphError::UnknownParameter(name.clone()))?,
            NodeKind::Constant(t) => t.clone(),
            NodeKind::MatVec => tensor::matvec(self.input_value(id, 0), self.input_value(id, 1))?,
            NodeKind::Add => tensor::add(self.input_value(id, 0), self.input_value(id, 1))?,
            NodeKind::Tanh => tensor::tanh(self.input_value(id, 0)),
            NodeKind::Concat => {
                let parts: Vec<&Tensor> = (0..node.inputs.len())
                    .map(|k| self.input_value(id, k))
                    .collect();
                tensor::concat(&parts)?
            }
            NodeKind::MaxPool { width } => {
                let rows: Vec<&Tensor> = (0..node.inputs.len())
                    .map(|k| self.input_value(id, k))
                    .collect();
                tensor::maxpool(&rows, *width)?
            }
            NodeKind::IndexScalar(i) => Tensor::scalar(self.input_value(id, 0).get(*i)?),
        };
        Ok(out)
    }

    /// Reverse sweep from the seeded nodes; returns `Σ seed · ∂value/∂θ` for
    /// every parameter reachable from a seed. Seeds on the same node add up.
    pub fn backward(&self, seeds: &[(NodeRef, Tensor)]) -> Result<Gradients, GraphError> {
        let mut grads = Gradients::default();
        let Some(top) = seeds.iter().map(|(n, _)| n.0).max() else {
            return Ok(grads);
        };
        if top >= self.nodes.len() {
            return Err(GraphError::UnknownNode(top));
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; top + 1];
        for (node, seed) in seeds {
            let value = self.nodes[node.0]
                .value
                .as_ref()
                .ok_or(GraphError::Unevaluated(node.0))?;
            if value.shape() != seed.shape() {
                return Err(GraphError::SeedShape {
                    node: node.0,
                    expected: value.shape().to_vec(),
                    got: seed.shape().to_vec(),
                });
            }
            accumulate(&mut adjoints[node.0], seed)?;
        }

        for id in (0..=top).rev() {
            let Some(adj) = adjoints[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            match &node.kind {
                NodeKind::Parameter(name) => grads.add(name, &adj, 1.0)?,
                NodeKind::Constant(_) => {}
                NodeKind::MatVec => {
                    let a = self.input_value(id, 0);
                    let x = self.input_value(id, 1);
                    let (m, n) = (a.shape()[0], a.shape()[1]);
                    let (ra, rx) = (node.inputs[0], node.inputs[1]);
                    if self.nodes[ra.0].needs_grad {
                        let mut da = Tensor::zeros(&[m, n]);
                        let dav = da.values_mut();
                        for i in 0..m {
                            let g = adj.values()[i];
                            for j in 0..n {
                                dav[i * n + j] = g * x.values()[j];
                            }
                        }
                        accumulate(&mut adjoints[ra.0], &da)?;
                    }
                    if self.nodes[rx.0].needs_grad {
                        let mut dx = Tensor::zeros(&[n]);
                        let dxv = dx.values_mut();
                        for i in 0..m {
                            let g = adj.values()[i];
                            for j in 0..n {
                                dxv[j] += a.values()[i * n + j] * g;
                            }
                        }
                        accumulate(&mut adjoints[rx.0], &dx)?;
                    }
                }
                NodeKind::Add => {
                    for r in &node.inputs {
                        if self.nodes[r.0].needs_grad {
                            accumulate(&mut adjoints[r.0], &adj)?;
                        }
                    }
                }
                NodeKind::Tanh => {
                    let y = node.value.as_ref().expect("evaluated");
                    let values = adj
                        .values()
                        .iter()
                        .zip(y.values())
                        .map(|(g, t)| g * (1.0 - t * t))
                        .collect();
                    let du = Tensor::new(y.shape().to_vec(), values)?;
                    accumulate(&mut adjoints[node.inputs[0].0], &du)?;
                }
                NodeKind::Concat => {
                    let mut offset = 0;
                    for (k, r) in node.inputs.iter().enumerate() {
                        let len = self.input_value(id, k).len();
                        if self.nodes[r.0].needs_grad {
                            let part =
                                Tensor::vector(adj.values()[offset..offset + len].to_vec());
                            accumulate(&mut adjoints[r.0], &part)?;
                        }
                        offset += len;
                    }
                }
                NodeKind::MaxPool { width } => {
                    let rows: Vec<&Tensor> = (0..node.inputs.len())
                        .map(|k| self.input_value(id, k))
                        .collect();
                    let winners = tensor::maxpool_with_argmax(&rows, *width)?;
                    for (col, (winner, _)) in winners.into_iter().enumerate() {
                        let Some(row) = winner else { continue };
                        let r = node.inputs[row];
                        if self.nodes[r.0].needs_grad {
                            let d = Tensor::zeros(&[*width]).one_hot_like(col, adj.values()[col])?;
                            accumulate(&mut adjoints[r.0], &d)?;
                        }
                    }
                }
                NodeKind::IndexScalar(i) => {
                    let r = node.inputs[0];
                    let d = self.input_value(id, 0).one_hot_like(*i, adj.values()[0])?;
                    accumulate(&mut adjoints[r.0], &d)?;
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: &Tensor) -> Result<(), GraphError> {
    match slot {
        Some(acc) => acc.axpy(1.0, g)?,
        None => *slot = Some(g.clone()),
    }
    Ok(())
}
