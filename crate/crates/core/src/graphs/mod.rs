//! Graph data model, embodiment extraction and the morphology rule table.

mod corpus;
mod generate;
mod shapes;

pub(crate) use corpus::fmt_f64;
pub use corpus::{corpus_hash, load_corpus, read_corpus, save_corpus, write_corpus};
pub use generate::{generate_dataset, generate_graph, DatasetSpec, Family, SplitFractions};
pub use shapes::{ConfounderShape, MotifShape};

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Width of every node feature vector.
pub const FEATURE_WIDTH: usize = 4;

/// Number of label (motif) classes.
pub const NUM_CLASSES: usize = 3;

/// Hop radius of the embodiment recorded by the generator.
pub const EMBODIMENT_RADIUS: usize = 3;

/// Motif-side degree at or above which a connection point counts as "high".
pub const HIGH_DEGREE_THRESHOLD: usize = 3;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph {0} has no connection node")]
    MissingConnection(usize),
    #[error("invalid graph {id}: {reason}")]
    Invalid { id: usize, reason: String },
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Value space of the accessible causal factor: cycle membership of the
/// connection point crossed with a degree threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MorphologyClass {
    AcyclicLow = 0,
    AcyclicHigh = 1,
    CyclicLow = 2,
    CyclicHigh = 3,
}

impl MorphologyClass {
    pub const COUNT: usize = 4;
    pub const ALL: [MorphologyClass; 4] = [
        MorphologyClass::AcyclicLow,
        MorphologyClass::AcyclicHigh,
        MorphologyClass::CyclicLow,
        MorphologyClass::CyclicHigh,
    ];

    pub fn from_rule(on_cycle: bool, motif_degree: usize) -> Self {
        match (on_cycle, motif_degree >= HIGH_DEGREE_THRESHOLD) {
            (false, false) => MorphologyClass::AcyclicLow,
            (false, true) => MorphologyClass::AcyclicHigh,
            (true, false) => MorphologyClass::CyclicLow,
            (true, true) => MorphologyClass::CyclicHigh,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MorphologyClass::AcyclicLow => "acyclic-low",
            MorphologyClass::AcyclicHigh => "acyclic-high",
            MorphologyClass::CyclicLow => "cyclic-low",
            MorphologyClass::CyclicHigh => "cyclic-high",
        }
    }
}

/// One attributed graph: a motif stitched to a confounder base by a single
/// bridge edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub id: usize,
    pub num_nodes: usize,
    /// Undirected edges, each listed once with `u < v`.
    pub edges: Vec<(usize, usize)>,
    pub node_features: Vec<[f64; FEATURE_WIDTH]>,
    pub label: usize,
    pub motif_class: usize,
    pub confounder_class: usize,
    /// Motif-side endpoint of the bridge edge.
    pub connection_node: Option<usize>,
    pub embodiment_nodes: Vec<usize>,
    pub split: Split,
}

impl GraphSample {
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(u, v)| u == node || v == node)
            .count()
    }

    pub fn connection(&self) -> Result<usize, GraphError> {
        self.connection_node
            .ok_or(GraphError::MissingConnection(self.id))
    }

    pub fn is_connected(&self) -> bool {
        let all: Vec<usize> = (0..self.num_nodes).collect();
        induced_connected(&self.adjacency(), &all)
    }

    /// Checks the structural invariants of a sample.
    pub fn validate(&self) -> Result<(), GraphError> {
        let fail = |reason: String| GraphError::Invalid {
            id: self.id,
            reason,
        };
        if self.num_nodes == 0 {
            return Err(fail("no nodes".into()));
        }
        if self.node_features.len() != self.num_nodes {
            return Err(fail(format!(
                "{} feature rows for {} nodes",
                self.node_features.len(),
                self.num_nodes
            )));
        }
        let mut seen = BTreeSet::new();
        for &(u, v) in &self.edges {
            if u >= v || v >= self.num_nodes {
                return Err(fail(format!("bad edge ({u}, {v})")));
            }
            if !seen.insert((u, v)) {
                return Err(fail(format!("duplicate edge ({u}, {v})")));
            }
        }
        if self.label >= NUM_CLASSES || self.confounder_class >= NUM_CLASSES {
            return Err(fail("class index out of range".into()));
        }
        if self.label != self.motif_class {
            return Err(fail("label differs from motif class".into()));
        }
        if let Some(c) = self.connection_node {
            if c >= self.num_nodes {
                return Err(fail(format!("connection node {c} out of range")));
            }
            if !self.embodiment_nodes.contains(&c) {
                return Err(fail("connection node outside embodiment".into()));
            }
        }
        if self.embodiment_nodes.iter().any(|&n| n >= self.num_nodes) {
            return Err(fail("embodiment node out of range".into()));
        }
        if !self.embodiment_nodes.is_empty()
            && !induced_connected(&self.adjacency(), &self.embodiment_nodes)
        {
            return Err(fail("embodiment is not connected".into()));
        }
        Ok(())
    }
}

/// Closed `radius`-hop neighbourhood of `center`, sorted.
pub fn ball(adj: &[Vec<usize>], center: usize, radius: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[center] = 0;
    let mut queue = VecDeque::from([center]);
    let mut out = vec![center];
    while let Some(u) = queue.pop_front() {
        if dist[u] == radius {
            continue;
        }
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                out.push(v);
                queue.push_back(v);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Closed `radius`-hop neighbourhood of the connection node.
pub fn embodiment_of(g: &GraphSample, radius: usize) -> Result<Vec<usize>, GraphError> {
    let c = g.connection()?;
    Ok(ball(&g.adjacency(), c, radius))
}

fn induced_connected(adj: &[Vec<usize>], nodes: &[usize]) -> bool {
    let Some(&start) = nodes.first() else {
        return true;
    };
    let inside: BTreeSet<usize> = nodes.iter().copied().collect();
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if inside.contains(&v) && seen.insert(v) {
                stack.push(v);
            }
        }
    }
    seen.len() == inside.len()
}

/// Whether `center` lies on a cycle of the subgraph induced by `nodes`:
/// after deleting `center`, two of its neighbours must still be joined.
pub fn on_cycle_within(adj: &[Vec<usize>], nodes: &[usize], center: usize) -> bool {
    let inside: BTreeSet<usize> = nodes.iter().copied().collect();
    let neighbours: Vec<usize> = adj[center]
        .iter()
        .copied()
        .filter(|v| inside.contains(v))
        .collect();
    let mut component = vec![usize::MAX; adj.len()];
    for (label, &start) in neighbours.iter().enumerate() {
        if component[start] != usize::MAX {
            return true;
        }
        component[start] = label;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if v == center || !inside.contains(&v) {
                    continue;
                }
                if component[v] == usize::MAX {
                    component[v] = label;
                    stack.push(v);
                }
            }
        }
    }
    false
}

/// Ground-truth morphology of the connection point: cycle membership within
/// the recorded embodiment and motif-side degree (the bridge edge excluded).
pub fn morphology_class(g: &GraphSample) -> Result<MorphologyClass, GraphError> {
    let c = g.connection()?;
    let adj = g.adjacency();
    let on_cycle = on_cycle_within(&adj, &g.embodiment_nodes, c);
    let motif_degree = adj[c].len().saturating_sub(1);
    Ok(MorphologyClass::from_rule(on_cycle, motif_degree))
}
