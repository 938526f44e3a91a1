//! Attributed undirected graphs, datasets, and disjoint-union batches.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// First invariant a [`Graph`] breaks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EndpointOutOfRange {
        edge: usize,
        endpoints: (usize, usize),
        num_nodes: usize,
    },
    SelfLoop {
        edge: usize,
        node: usize,
    },
    DuplicateEdge {
        first: usize,
        second: usize,
        endpoints: (usize, usize),
    },
    FeatureRows {
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EndpointOutOfRange {
                edge,
                endpoints: (u, v),
                num_nodes,
            } => write!(
                f,
                "edge #{edge} ({u}, {v}) has an endpoint outside 0..{num_nodes}"
            ),
            Violation::SelfLoop { edge, node } => write!(f, "edge #{edge} is a self-loop on {node}"),
            Violation::DuplicateEdge {
                first,
                second,
                endpoints: (u, v),
            } => write!(f, "edges #{first} and #{second} both connect {u} and {v}"),
            Violation::FeatureRows { expected, found } => {
                write!(f, "{found} feature rows for {expected} nodes")
            }
        }
    }
}

impl std::error::Error for Violation {}

/// Immutable attributed graph. Each undirected edge is stored once.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    label: usize,
}

impl Graph {
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Tensor,
        label: usize,
    ) -> Result<Self> {
        let g = Self::new_unchecked(num_nodes, edges, features, label);
        g.validate()?;
        Ok(g)
    }

    /// Builds a graph without checking its invariants; see [`Graph::validate`].
    pub fn new_unchecked(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Tensor,
        label: usize,
    ) -> Self {
        Self {
            num_nodes,
            edges,
            features,
            label,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `num_nodes × feature_dim` matrix.
    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn with_features(&self, features: Tensor) -> Self {
        Self {
            features,
            ..self.clone()
        }
    }

    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Self {
        Self {
            edges,
            ..self.clone()
        }
    }

    /// Adjacency lists in edge order.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Checks every structural invariant and reports the first one broken.
    pub fn validate(&self) -> Result<(), Violation> {
        if !self.features.is_matrix() || self.features.rows() != self.num_nodes {
            return Err(Violation::FeatureRows {
                expected: self.num_nodes,
                found: if self.features.is_matrix() {
                    self.features.rows()
                } else {
                    0
                },
            });
        }
        let mut seen = std::collections::HashMap::with_capacity(self.edges.len());
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if u >= self.num_nodes || v >= self.num_nodes {
                return Err(Violation::EndpointOutOfRange {
                    edge: i,
                    endpoints: (u, v),
                    num_nodes: self.num_nodes,
                });
            }
            if u == v {
                return Err(Violation::SelfLoop { edge: i, node: u });
            }
            if let Some(first) = seen.insert((u.min(v), u.max(v)), i) {
                return Err(Violation::DuplicateEdge {
                    first,
                    second: i,
                    endpoints: (u, v),
                });
            }
        }
        Ok(())
    }

    /// Subgraph on `keep`, relabeled densely in ascending original order.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<Graph> {
        if keep.is_empty() {
            return Err(Error::invalid("induced_subgraph needs at least one node"));
        }
        let mut new_index = vec![usize::MAX; self.num_nodes];
        for &k in keep {
            if k >= self.num_nodes {
                return Err(Error::invalid(format!(
                    "node {k} out of range 0..{}",
                    self.num_nodes
                )));
            }
            new_index[k] = 0;
        }
        let mut kept = Vec::with_capacity(keep.len());
        for (old, slot) in new_index.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = kept.len();
                kept.push(old);
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| new_index[u] != usize::MAX && new_index[v] != usize::MAX)
            .map(|&(u, v)| (new_index[u], new_index[v]))
            .collect();
        let cols = self.feature_dim();
        let mut data = Vec::with_capacity(kept.len() * cols);
        for &old in &kept {
            data.extend_from_slice(self.features.row(old));
        }
        let features = Tensor::matrix(kept.len(), cols, data)?;
        Ok(Graph::new_unchecked(kept.len(), edges, features, self.label))
    }

    /// Whether every node is reachable from node 0. The empty graph counts as connected.
    pub fn is_connected(&self) -> bool {
        if self.num_nodes == 0 {
            return true;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.num_nodes
    }
}

/// A labeled graph corpus with a shared feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    graphs: Vec<Graph>,
    num_classes: usize,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        let feature_dim = graphs.first().map_or(0, Graph::feature_dim);
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::invalid(format!(
                    "graph {i} has feature_dim {}, expected {feature_dim}",
                    g.feature_dim()
                )));
            }
            if g.label() >= num_classes {
                return Err(Error::invalid(format!(
                    "graph {i} has label {} outside 0..{num_classes}",
                    g.label()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            graphs,
            num_classes,
            feature_dim,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::label).collect()
    }
}

/// Disjoint union of graphs, ready for message passing and pooling.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    node_features: Tensor,
    /// Both directions of every undirected edge, consecutively.
    directed_edges: Arc<[(usize, usize)]>,
    node_to_graph: Arc<[usize]>,
    node_offsets: Vec<usize>,
    labels: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[Graph]) -> Result<Self> {
        batch_graphs(graphs)
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn directed_edges(&self) -> &Arc<[(usize, usize)]> {
        &self.directed_edges
    }

    pub fn node_to_graph(&self) -> &Arc<[usize]> {
        &self.node_to_graph
    }

    pub fn batch_size(&self) -> usize {
        self.labels.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_to_graph.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Recovers the `i`-th member graph.
    pub fn graph(&self, i: usize) -> Graph {
        let (start, end) = (self.node_offsets[i], self.node_offsets[i + 1]);
        let edges = self
            .directed_edges
            .iter()
            .step_by(2)
            .filter(|&&(u, _)| u >= start && u < end)
            .map(|&(u, v)| (u - start, v - start))
            .collect();
        let cols = self.node_features.cols();
        let data = self.node_features.data()[start * cols..end * cols].to_vec();
        let features = Tensor::from_parts_unchecked(vec![end - start, cols], data);
        Graph::new_unchecked(end - start, edges, features, self.labels[i])
    }
}

/// Concatenates graphs into one batch, offsetting node indices per graph.
pub fn batch_graphs(graphs: &[Graph]) -> Result<GraphBatch> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::invalid("cannot batch an empty list of graphs"))?;
    let cols = first.feature_dim();
    let total: usize = graphs.iter().map(Graph::num_nodes).sum();
    let mut data = Vec::with_capacity(total * cols);
    let mut edges = Vec::with_capacity(graphs.iter().map(|g| 2 * g.num_edges()).sum());
    let mut node_to_graph = Vec::with_capacity(total);
    let mut node_offsets = Vec::with_capacity(graphs.len() + 1);
    let mut offset = 0;
    for (i, g) in graphs.iter().enumerate() {
        if g.feature_dim() != cols {
            return Err(Error::shape(
                "batch_graphs",
                first.features().shape(),
                g.features().shape(),
            ));
        }
        node_offsets.push(offset);
        data.extend_from_slice(g.features().data());
        for &(u, v) in g.edges() {
            edges.push((u + offset, v + offset));
            edges.push((v + offset, u + offset));
        }
        node_to_graph.extend(std::iter::repeat_n(i, g.num_nodes()));
        offset += g.num_nodes();
    }
    node_offsets.push(offset);
    Ok(GraphBatch {
        node_features: Tensor::matrix(total, cols, data)?,
        directed_edges: Arc::from(edges),
        node_to_graph: Arc::from(node_to_graph),
        node_offsets,
        labels: graphs.iter().map(Graph::label).collect(),
    })
}

/// Undirected edge set keyed by `(min, max)`.
pub(crate) fn edge_set(edges: &[(usize, usize)]) -> HashSet<(usize, usize)> {
    edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect()
}
