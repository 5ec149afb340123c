//! The fixed expert: a parameter-free structural embedding of the connection
//! point, a smoothed one-hot projection onto the morphology classes, and
//! tempered targets for intervened inputs.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::{GraphError, GraphSample, MorphologyClass};
use crate::numerics::{DistributionVector, PROBABILITY_FLOOR};

pub const DEFAULT_EPSILON: f64 = 0.05;

/// Temperature per intervention type (type 1 first).
pub const DEFAULT_GAMMAS: [f64; 3] = [1.0, 0.5, 0.25];

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("intervention type {j} outside 1..={k}")]
    InvalidType { j: usize, k: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Structural summary of the connection point, computed from the embodiment
/// subgraph alone.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphologyDescriptor {
    /// Degree on the motif side; the single bridge edge is not counted.
    pub degree: usize,
    pub on_cycle: bool,
    /// Degrees (within the embodiment) of the connection point's neighbours.
    pub neighbor_degrees: Vec<usize>,
    pub clustering: f64,
}

impl MorphologyDescriptor {
    pub fn class(&self) -> MorphologyClass {
        MorphologyClass::from_rule(self.on_cycle, self.degree)
    }
}

/// Induced adjacency of the embodiment, indexed locally.
fn embodiment_subgraph(g: &GraphSample) -> (Vec<usize>, Vec<Vec<usize>>) {
    let nodes = g.embodiment_nodes.clone();
    let mut local = vec![usize::MAX; g.num_nodes];
    for (i, &n) in nodes.iter().enumerate() {
        local[n] = i;
    }
    let mut adj = vec![Vec::new(); nodes.len()];
    for &(u, v) in &g.edges {
        let (lu, lv) = (local[u], local[v]);
        if lu != usize::MAX && lv != usize::MAX {
            adj[lu].push(lv);
            adj[lv].push(lu);
        }
    }
    (nodes, adj)
}

/// Whether some edge at `root` is not a bridge (iterative low-link search).
fn incident_non_bridge(adj: &[Vec<usize>], root: usize) -> bool {
    let n = adj.len();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    // (node, parent, next neighbour position)
    let mut stack = vec![(root, usize::MAX, 0usize)];
    disc[root] = timer;
    low[root] = timer;
    timer += 1;
    let mut root_has_cycle = false;
    while let Some(&mut (u, parent, ref mut pos)) = stack.last_mut() {
        if *pos < adj[u].len() {
            let v = adj[u][*pos];
            *pos += 1;
            if v == parent {
                continue;
            }
            if disc[v] == usize::MAX {
                disc[v] = timer;
                low[v] = timer;
                timer += 1;
                stack.push((v, u, 0));
            } else {
                low[u] = low[u].min(disc[v]);
            }
        } else {
            stack.pop();
            if let Some(&(p, _, _)) = stack.last() {
                low[p] = low[p].min(low[u]);
                if p == root && low[u] <= disc[p] {
                    root_has_cycle = true;
                }
            }
        }
    }
    root_has_cycle
}

/// `r^E`: the structural embedding of a graph's connection point.
pub fn expert_embed(g: &GraphSample) -> Result<MorphologyDescriptor, ExpertError> {
    let c = g.connection()?;
    let (nodes, adj) = embodiment_subgraph(g);
    let root = nodes
        .iter()
        .position(|&n| n == c)
        .ok_or_else(|| GraphError::Invalid {
            id: g.id,
            reason: "connection node outside embodiment".into(),
        })?;
    let neighbours = &adj[root];
    let mut neighbor_degrees: Vec<usize> = neighbours.iter().map(|&v| adj[v].len()).collect();
    neighbor_degrees.sort_unstable();
    let k = neighbours.len();
    let clustering = if k < 2 {
        0.0
    } else {
        let mut links = 0;
        for (i, &a) in neighbours.iter().enumerate() {
            for &b in &neighbours[i + 1..] {
                if adj[a].contains(&b) {
                    links += 1;
                }
            }
        }
        2.0 * links as f64 / (k * (k - 1)) as f64
    };
    Ok(MorphologyDescriptor {
        degree: k.saturating_sub(1),
        on_cycle: incident_non_bridge(&adj, root),
        neighbor_degrees,
        clustering,
    })
}

/// Per-type weights of the intervention-adjusted target: `w_j(t) = p(t)^(γ_j - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionWeights {
    pub gammas: Vec<f64>,
}

impl Default for InterventionWeights {
    fn default() -> Self {
        Self {
            gammas: DEFAULT_GAMMAS.to_vec(),
        }
    }
}

impl InterventionWeights {
    pub fn num_types(&self) -> usize {
        self.gammas.len()
    }

    fn gamma(&self, j: usize) -> Result<f64, ExpertError> {
        if j == 0 || j > self.gammas.len() {
            return Err(ExpertError::InvalidType {
                j,
                k: self.gammas.len(),
            });
        }
        Ok(self.gammas[j - 1])
    }

    /// Strictly positive weight vector for type `j` (1-based) given `p`.
    pub fn weights(&self, p: &DistributionVector, j: usize) -> Result<Vec<f64>, ExpertError> {
        let gamma = self.gamma(j)?;
        Ok(p.as_slice()
            .iter()
            .map(|&x| x.max(PROBABILITY_FLOOR).powf(gamma - 1.0))
            .collect())
    }
}

/// The expert pipeline with its two fixed knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertModel {
    pub epsilon: f64,
    pub weights: InterventionWeights,
}

impl Default for ExpertModel {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            weights: InterventionWeights::default(),
        }
    }
}

impl ExpertModel {
    /// `r^P`: `(1-ε)·onehot(class) + ε·uniform`.
    pub fn project(&self, d: &MorphologyDescriptor) -> DistributionVector {
        project_class(d.class(), self.epsilon)
    }

    /// `r^I`: `Normalize(p ∘ h_j(p))`, i.e. `p^γ_j` renormalized.
    pub fn intervened(
        &self,
        p: &DistributionVector,
        j: usize,
    ) -> Result<DistributionVector, ExpertError> {
        let w = self.weights.weights(p, j)?;
        let raw: Vec<f64> = p.as_slice().iter().zip(&w).map(|(a, b)| a * b).collect();
        let total: f64 = raw.iter().sum();
        Ok(
            DistributionVector::new(raw.into_iter().map(|v| v / total).collect())
                .expect("tempering keeps a distribution"),
        )
    }

    pub fn targets(&self, g: &GraphSample) -> Result<ExpertTargets, ExpertError> {
        let d = expert_embed(g)?;
        let projected = self.project(&d);
        let intervened = (1..=self.weights.num_types())
            .map(|j| self.intervened(&projected, j))
            .collect::<Result<_, _>>()?;
        Ok(ExpertTargets {
            id: g.id,
            class: d.class(),
            projected,
            intervened,
        })
    }
}

pub fn project_class(class: MorphologyClass, epsilon: f64) -> DistributionVector {
    let n = MorphologyClass::COUNT;
    let mut v = vec![epsilon / n as f64; n];
    v[class.index()] += 1.0 - epsilon;
    DistributionVector::new(v).expect("convex combination of distributions")
}

/// Default-model `r^P`.
pub fn expert_project(d: &MorphologyDescriptor) -> DistributionVector {
    ExpertModel::default().project(d)
}

/// Default-model `r^I` for 1-based type `j`.
pub fn expert_intervened(
    p: &DistributionVector,
    j: usize,
) -> Result<DistributionVector, ExpertError> {
    ExpertModel::default().intervened(p, j)
}

/// Precomputed expert outputs for one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertTargets {
    pub id: usize,
    pub class: MorphologyClass,
    pub projected: DistributionVector,
    /// One target per intervention type, type 1 first.
    pub intervened: Vec<DistributionVector>,
}

pub fn precompute_targets(
    model: &ExpertModel,
    corpus: &[GraphSample],
) -> Result<Vec<ExpertTargets>, ExpertError> {
    corpus.iter().map(|g| model.targets(g)).collect()
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    id: usize,
    class: usize,
    rp: Vec<f64>,
    ri: Vec<Vec<f64>>,
}

pub fn save_target_cache(
    targets: &[ExpertTargets],
    path: impl AsRef<Path>,
) -> Result<(), ExpertError> {
    let mut out = Vec::new();
    for t in targets {
        let line = CacheLine {
            id: t.id,
            class: t.class.index(),
            rp: t.projected.as_slice().to_vec(),
            ri: t.intervened.iter().map(|d| d.as_slice().to_vec()).collect(),
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_target_cache(path: impl AsRef<Path>) -> Result<Vec<ExpertTargets>, ExpertError> {
    let file = fs::File::open(path)?;
    let mut targets = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| ExpertError::Malformed {
            line: i + 1,
            message,
        };
        let raw: CacheLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let class = MorphologyClass::from_index(raw.class)
            .ok_or_else(|| malformed(format!("class {}", raw.class)))?;
        let dist = |v: Vec<f64>| DistributionVector::new(v).map_err(|e| malformed(e.to_string()));
        targets.push(ExpertTargets {
            id: raw.id,
            class,
            projected: dist(raw.rp)?,
            intervened: raw.ri.into_iter().map(dist).collect::<Result<_, _>>()?,
        });
    }
    Ok(targets)
}
