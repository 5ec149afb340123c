//! Spurious-Motif and Motif-Variant corpus generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::shapes::{ConfounderShape, MotifShape};
use super::{ball, GraphError, GraphSample, Split, EMBODIMENT_RADIUS, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    SpuriousMotif,
    MotifVariant,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::SpuriousMotif => "spurious-motif",
            Family::MotifVariant => "motif-variant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "spurious-motif" => Some(Family::SpuriousMotif),
            "motif-variant" => Some(Family::MotifVariant),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub family: Family,
    pub count: usize,
    /// Probability that a train/val graph pairs its motif with the
    /// confounder of the same class. 1/3 is balanced.
    pub bias: f64,
    /// Test graphs get doubled confounder sizes.
    pub ood_test: bool,
    pub seed: u64,
    pub fractions: SplitFractions,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            family: Family::SpuriousMotif,
            count: 5000,
            bias: 1.0 / 3.0,
            ood_test: false,
            seed: 0,
            fractions: SplitFractions::default(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::InvalidSpec(m));
        if self.count == 0 {
            return bad("count must be positive".into());
        }
        if !(1.0 / 3.0 - 1e-12..=1.0).contains(&self.bias) {
            return bad(format!("bias {} outside [1/3, 1]", self.bias));
        }
        let f = self.fractions;
        if [f.train, f.val, f.test]
            .iter()
            .any(|x| !(0.0..=1.0).contains(x))
            || (f.train + f.val + f.test - 1.0).abs() > 1e-9
        {
            return bad(format!("split fractions {f:?} do not sum to 1"));
        }
        Ok(())
    }

    /// Number of graphs in each split, in (train, val, test) order.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let train = (self.count as f64 * self.fractions.train).round() as usize;
        let val = ((self.count as f64 * self.fractions.val).round() as usize)
            .min(self.count - train.min(self.count));
        let train = train.min(self.count);
        (train, val, self.count - train - val)
    }

    pub fn split_of(&self, index: usize) -> Split {
        let (train, val, _) = self.split_sizes();
        if index < train {
            Split::Train
        } else if index < train + val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// Generates `spec.count` graphs. Graph `i` draws from its own ChaCha stream
/// keyed by `(seed, i)`, so the corpus is reproducible and any graph can be
/// regenerated alone.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<GraphSample>, GraphError> {
    spec.validate()?;
    Ok((0..spec.count).map(|i| generate_graph(spec, i)).collect())
}

pub fn generate_graph(spec: &DatasetSpec, index: usize) -> GraphSample {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let split = spec.split_of(index);

    let motif_class = rng.random_range(0..NUM_CLASSES);
    let confounder_class = match split {
        Split::Test => rng.random_range(0..NUM_CLASSES),
        Split::Train | Split::Val => {
            if rng.random_bool(spec.bias.clamp(0.0, 1.0)) {
                motif_class
            } else {
                let offset = rng.random_range(1..NUM_CLASSES);
                (motif_class + offset) % NUM_CLASSES
            }
        }
    };

    let motif = MotifShape::from_class(motif_class);
    let (motif_n, motif_edges) = match spec.family {
        Family::SpuriousMotif => motif.canonical(),
        Family::MotifVariant => motif.variant(&mut rng),
    };
    let enlarged = spec.ood_test && split == Split::Test;
    let (base_n, base_edges) =
        ConfounderShape::from_class(confounder_class).sample(&mut rng, enlarged);

    // base nodes first, motif nodes after
    let num_nodes = base_n + motif_n;
    let mut edges = base_edges;
    edges.extend(
        motif_edges
            .into_iter()
            .map(|(u, v)| (u + base_n, v + base_n)),
    );
    let connection = base_n + rng.random_range(0..motif_n);
    let anchor = rng.random_range(0..base_n);
    edges.push((anchor, connection));
    for e in &mut edges {
        *e = (e.0.min(e.1), e.0.max(e.1));
    }
    edges.sort_unstable();

    let node_features = (0..num_nodes)
        .map(|_| {
            [
                1.0,
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>(),
            ]
        })
        .collect();

    let mut g = GraphSample {
        id: index,
        num_nodes,
        edges,
        node_features,
        label: motif_class,
        motif_class,
        confounder_class,
        connection_node: Some(connection),
        embodiment_nodes: Vec::new(),
        split,
    };
    g.embodiment_nodes = ball(&g.adjacency(), connection, EMBODIMENT_RADIUS);
    g
}
