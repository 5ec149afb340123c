//! Interchange interventions on the layer-`m` embodiment rows.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplacementSource {
    /// Non-embodiment rows of the same graph.
    SameGraph,
    /// Non-embodiment rows of another graph in the batch.
    CrossGraph,
    /// The mean layer-`m` row over the whole batch.
    BatchMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionType {
    pub rho: f64,
    pub source: ReplacementSource,
}

/// Types 1..=3: 25% same-graph, 50% cross-graph, 75% batch-mean.
pub fn default_types() -> Vec<InterventionType> {
    vec![
        InterventionType {
            rho: 0.25,
            source: ReplacementSource::SameGraph,
        },
        InterventionType {
            rho: 0.5,
            source: ReplacementSource::CrossGraph,
        },
        InterventionType {
            rho: 0.75,
            source: ReplacementSource::BatchMean,
        },
    ]
}

/// Where a replaced row comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceRow {
    /// Batch-global node row.
    Node(usize),
    BatchMean,
}

/// One graph's realized intervention of one type.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionPlan {
    /// 1-based type index.
    pub type_index: usize,
    pub rho: f64,
    pub source: ReplacementSource,
    /// Positions within the graph's embodiment list that are overwritten,
    /// paired with their replacement rows.
    pub replacements: Vec<(usize, SourceRow)>,
    /// The configured source had no candidate rows; batch-mean was used.
    pub fallback: bool,
}

impl InterventionPlan {
    /// A plan that replaces nothing.
    pub fn empty(type_index: usize, source: ReplacementSource) -> Self {
        Self {
            type_index,
            rho: 0.0,
            source,
            replacements: Vec::new(),
            fallback: false,
        }
    }

    pub fn replaced_count(embodiment_len: usize, rho: f64) -> usize {
        ((rho * embodiment_len as f64).ceil() as usize).min(embodiment_len)
    }

    /// Draws the replaced positions and their sources for graph `graph`.
    pub fn sample(
        batch: &Batch,
        graph: usize,
        type_index: usize,
        ty: InterventionType,
        rng: &mut impl Rng,
    ) -> Self {
        let emb_len = batch.embodiment[graph].len();
        let count = Self::replaced_count(emb_len, ty.rho);
        let mut positions = index::sample(rng, emb_len, count).into_vec();
        positions.sort_unstable();
        let pool: Option<&[usize]> = match ty.source {
            ReplacementSource::SameGraph => Some(&batch.outside[graph]),
            ReplacementSource::CrossGraph => {
                let others: Vec<usize> = (0..batch.num_graphs())
                    .filter(|&g| g != graph && !batch.outside[g].is_empty())
                    .collect();
                if others.is_empty() {
                    None
                } else {
                    Some(&batch.outside[others[rng.random_range(0..others.len())]])
                }
            }
            ReplacementSource::BatchMean => None,
        };
        let pool = pool.filter(|p| !p.is_empty());
        let fallback = count > 0 && ty.source != ReplacementSource::BatchMean && pool.is_none();
        let replacements = positions
            .into_iter()
            .map(|pos| {
                let row = match pool {
                    Some(p) => SourceRow::Node(p[rng.random_range(0..p.len())]),
                    None => SourceRow::BatchMean,
                };
                (pos, row)
            })
            .collect();
        Self {
            type_index,
            rho: ty.rho,
            source: ty.source,
            replacements,
            fallback,
        }
    }

    /// Row indices into `[layer_m; batch_mean]` for this graph's embodiment.
    pub(crate) fn gather_index(&self, embodiment: &[usize], mean_row: usize) -> Vec<usize> {
        let mut idx = embodiment.to_vec();
        for &(pos, row) in &self.replacements {
            idx[pos] = match row {
                SourceRow::Node(n) => n,
                SourceRow::BatchMean => mean_row,
            };
        }
        idx
    }
}

/// Plans for every graph of a batch and every type, indexed `[type][graph]`.
pub fn sample_plans(
    batch: &Batch,
    types: &[InterventionType],
    rng: &mut impl Rng,
) -> Vec<Vec<InterventionPlan>> {
    types
        .iter()
        .enumerate()
        .map(|(j, &ty)| {
            (0..batch.num_graphs())
                .map(|g| InterventionPlan::sample(batch, g, j + 1, ty, rng))
                .collect()
        })
        .collect()
}
