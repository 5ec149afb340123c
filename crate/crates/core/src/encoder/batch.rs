//! Several graphs packed into one node matrix with index lists for message
//! passing and pooling.

use crate::graphs::{GraphError, GraphSample, FEATURE_WIDTH};
use crate::numerics::Tensor;

#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Tensor,
    /// Directed message edges (both orientations of every undirected edge).
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub degree: Vec<f64>,
    /// Graph index of every node.
    pub graph_of: Vec<usize>,
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Embodiment nodes of every graph, as batch-global row indices.
    pub embodiment: Vec<Vec<usize>>,
    /// Nodes outside the embodiment, as batch-global row indices.
    pub outside: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(graphs: &[&GraphSample]) -> Result<Self, GraphError> {
        if graphs.is_empty() {
            return Err(GraphError::InvalidSpec("empty batch".into()));
        }
        let total: usize = graphs.iter().map(|g| g.num_nodes).sum();
        let mut features = Vec::with_capacity(total * FEATURE_WIDTH);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut degree = vec![0.0; total];
        let mut graph_of = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(graphs.len());
        let mut sizes = Vec::with_capacity(graphs.len());
        let mut embodiment = Vec::with_capacity(graphs.len());
        let mut outside = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            if g.node_features.len() != g.num_nodes || g.num_nodes == 0 {
                return Err(GraphError::Invalid {
                    id: g.id,
                    reason: "feature rows do not match node count".into(),
                });
            }
            for row in &g.node_features {
                features.extend_from_slice(row);
            }
            for &(u, v) in &g.edges {
                src.push(offset + u);
                dst.push(offset + v);
                src.push(offset + v);
                dst.push(offset + u);
                degree[offset + u] += 1.0;
                degree[offset + v] += 1.0;
            }
            graph_of.extend(std::iter::repeat_n(gi, g.num_nodes));
            let mut inside = vec![false; g.num_nodes];
            for &n in &g.embodiment_nodes {
                inside[n] = true;
            }
            embodiment.push(g.embodiment_nodes.iter().map(|&n| offset + n).collect());
            outside.push(
                (0..g.num_nodes)
                    .filter(|&n| !inside[n])
                    .map(|n| offset + n)
                    .collect(),
            );
            offsets.push(offset);
            sizes.push(g.num_nodes);
            offset += g.num_nodes;
        }
        Ok(Self {
            features: Tensor::from_parts(vec![total, FEATURE_WIDTH], features),
            src,
            dst,
            degree,
            graph_of,
            offsets,
            sizes,
            embodiment,
            outside,
            labels: graphs.iter().map(|g| g.label).collect(),
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.graph_of.len()
    }
}
