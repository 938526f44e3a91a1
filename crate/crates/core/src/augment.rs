//! Stochastic graph augmentations and two-view sampling.
//!
//! Every augmentation is a deterministic function of the input graph, the
//! ratio, and the state of the random stream it is given. The ratio always
//! means "strength of removal": larger values perturb more.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{edge_set, Graph};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AugmentKind {
    NodeDrop,
    Subgraph,
    EdgePerturb,
    AttrMask,
    Identity,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 5] = [
        AugmentKind::NodeDrop,
        AugmentKind::Subgraph,
        AugmentKind::EdgePerturb,
        AugmentKind::AttrMask,
        AugmentKind::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentKind::NodeDrop => "nodedrop",
            AugmentKind::Subgraph => "subgraph",
            AugmentKind::EdgePerturb => "edgeperturb",
            AugmentKind::AttrMask => "attrmask",
            AugmentKind::Identity => "identity",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "nodedrop" | "nd" => Ok(AugmentKind::NodeDrop),
            "subgraph" | "sg" => Ok(AugmentKind::Subgraph),
            "edgeperturb" | "edgeperturbation" | "ep" => Ok(AugmentKind::EdgePerturb),
            "attrmask" | "attributemasking" | "am" => Ok(AugmentKind::AttrMask),
            "identity" | "none" => Ok(AugmentKind::Identity),
            _ => Err(Error::invalid(format!("unknown augmentation '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentSpec {
    kind: AugmentKind,
    ratio: f64,
}

impl AugmentSpec {
    pub fn new(kind: AugmentKind, ratio: f64) -> Result<Self> {
        if kind != AugmentKind::Identity && !(0.0..1.0).contains(&ratio) {
            return Err(Error::invalid(format!(
                "augmentation ratio {ratio} outside [0, 1)"
            )));
        }
        Ok(Self { kind, ratio })
    }

    pub fn identity() -> Self {
        Self {
            kind: AugmentKind::Identity,
            ratio: 0.0,
        }
    }

    pub fn kind(&self) -> AugmentKind {
        self.kind
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn apply(&self, g: &Graph, rng: &mut Stream) -> Graph {
        match self.kind {
            AugmentKind::NodeDrop => node_drop(g, self.ratio, rng),
            AugmentKind::Subgraph => subgraph_walk(g, self.ratio, rng),
            AugmentKind::EdgePerturb => edge_perturb(g, self.ratio, rng),
            AugmentKind::AttrMask => attr_mask(g, self.ratio, rng),
            AugmentKind::Identity => g.clone(),
        }
    }
}

impl fmt::Display for AugmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind == AugmentKind::Identity {
            f.write_str("identity")
        } else {
            write!(f, "{}:{}", self.kind, self.ratio)
        }
    }
}

/// Nonempty set of augmentations each view draws from.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentPool {
    specs: Vec<AugmentSpec>,
}

impl AugmentPool {
    pub fn new(specs: Vec<AugmentSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("augmentation pool must not be empty"));
        }
        Ok(Self { specs })
    }

    pub fn specs(&self) -> &[AugmentSpec] {
        &self.specs
    }

    pub fn choose(&self, rng: &mut Stream) -> AugmentSpec {
        self.specs[rng.gen_range(0..self.specs.len())]
    }
}

// Tolerance keeps floor/ceil exact for ratios such as 0.1 whose binary
// representation is not exact.
const ROUNDING_SLACK: f64 = 1e-9;

pub(crate) fn floor_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + ROUNDING_SLACK).floor() as usize
}

pub(crate) fn ceil_keep(ratio: f64, n: usize) -> usize {
    ((1.0 - ratio) * n as f64 - ROUNDING_SLACK).ceil().max(0.0) as usize
}

/// Drops `floor(ratio·n)` uniformly chosen nodes, keeping at least one.
pub fn node_drop(g: &Graph, ratio: f64, rng: &mut Stream) -> Graph {
    let n = g.num_nodes();
    let drop = floor_count(ratio, n).min(n.saturating_sub(1));
    if drop == 0 {
        return g.clone();
    }
    let mut keep = sample(rng, n, n - drop).into_vec();
    keep.sort_unstable();
    g.induced_subgraph(&keep)
        .expect("survivor set is nonempty and in range")
}

/// Keeps the `ceil((1 − ratio)·n)` nodes first visited by a random walk.
///
/// The walk starts at a uniform node. When the visited set has no unvisited
/// neighbour left, it restarts at a uniform unvisited node.
pub fn subgraph_walk(g: &Graph, ratio: f64, rng: &mut Stream) -> Graph {
    let n = g.num_nodes();
    let target = ceil_keep(ratio, n).clamp(n.min(1), n);
    if target == n {
        return g.clone();
    }
    let adj = g.neighbors();
    let mut visited = vec![false; n];
    // Unvisited neighbours of the visited set, counted with multiplicity.
    let mut frontier = vec![0usize; n];
    let mut frontier_size = 0usize;
    let mut count = 0;

    let mut visit = |v: usize, visited: &mut Vec<bool>, frontier: &mut Vec<usize>| {
        visited[v] = true;
        if frontier[v] > 0 {
            frontier_size -= 1;
        }
        for &w in &adj[v] {
            if !visited[w] {
                if frontier[w] == 0 {
                    frontier_size += 1;
                }
                frontier[w] += 1;
            }
        }
        frontier_size
    };

    let mut current = rng.gen_range(0..n);
    let mut open = visit(current, &mut visited, &mut frontier);
    count += 1;
    while count < target {
        if open == 0 {
            let unvisited: Vec<usize> = (0..n).filter(|&v| !visited[v]).collect();
            current = unvisited[rng.gen_range(0..unvisited.len())];
        } else {
            let nbrs = &adj[current];
            current = nbrs[rng.gen_range(0..nbrs.len())];
            if visited[current] {
                continue;
            }
        }
        open = visit(current, &mut visited, &mut frontier);
        count += 1;
    }
    let keep: Vec<usize> = (0..n).filter(|&v| visited[v]).collect();
    g.induced_subgraph(&keep)
        .expect("walk visits at least one node")
}

/// Removes `floor(ratio·|E|)` edges and adds as many new ones between
/// pairs that were not adjacent in `g`.
pub fn edge_perturb(g: &Graph, ratio: f64, rng: &mut Stream) -> Graph {
    let m = g.num_edges();
    let swaps = floor_count(ratio, m);
    if swaps == 0 {
        return g.clone();
    }
    let mut removed = vec![false; m];
    for i in sample(rng, m, swaps) {
        removed[i] = true;
    }
    let mut edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(&e, _)| e)
        .collect();

    let existing = edge_set(g.edges());
    let n = g.num_nodes();
    let complement: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|e| !existing.contains(e))
        .collect();
    let add = swaps.min(complement.len());
    let mut picks = sample(rng, complement.len(), add).into_vec();
    picks.sort_unstable();
    edges.extend(picks.into_iter().map(|i| complement[i]));
    g.with_edges(edges)
}

/// Zeroes the feature rows of `floor(ratio·n)` uniformly chosen nodes.
pub fn attr_mask(g: &Graph, ratio: f64, rng: &mut Stream) -> Graph {
    let n = g.num_nodes();
    let masked = floor_count(ratio, n);
    if masked == 0 {
        return g.clone();
    }
    let mut features = g.features().clone();
    for v in sample(rng, n, masked) {
        features.row_mut(v).iter_mut().for_each(|x| *x = 0.0);
    }
    g.with_features(features)
}

/// Two views of `g`, each from an independently drawn pool member and an
/// independent child stream.
pub fn sample_view_pair(g: &Graph, pool: &AugmentPool, rng: &mut Stream) -> (Graph, Graph) {
    use rand::SeedableRng;
    let view = |rng: &mut Stream| {
        let spec = pool.choose(rng);
        let mut child = Stream::seed_from_u64(rng.gen());
        spec.apply(g, &mut child)
    };
    let a = view(rng);
    let b = view(rng);
    (a, b)
}
