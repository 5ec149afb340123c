//! Motif and confounder topologies.

use rand::Rng;

/// Node count and edge list of a small graph.
pub type Topology = (usize, Vec<(usize, usize)>);

/// Label-causing motifs. The class index is the graph label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotifShape {
    House,
    Cycle,
    Crane,
}

impl MotifShape {
    pub const ALL: [MotifShape; 3] = [MotifShape::House, MotifShape::Cycle, MotifShape::Crane];

    pub fn from_class(class: usize) -> Self {
        Self::ALL[class]
    }

    pub fn class(self) -> usize {
        self as usize
    }

    /// Fixed topology used by the Spurious-Motif family.
    pub fn canonical(self) -> Topology {
        match self {
            // square 0-1-2-3 with roof apex 4 over the 0-1 edge
            MotifShape::House => (5, vec![(0, 1), (1, 2), (2, 3), (0, 3), (0, 4), (1, 4)]),
            MotifShape::Cycle => cycle(6),
            MotifShape::Crane => crane(1, 2),
        }
    }

    /// Perturbed topology used by the Motif-Variant family.
    pub fn variant(self, rng: &mut impl Rng) -> Topology {
        match self {
            MotifShape::House => {
                let (n, mut edges) = MotifShape::House.canonical();
                if rng.random_bool(0.5) {
                    edges.push((0, 2));
                }
                (n, edges)
            }
            MotifShape::Cycle => cycle(rng.random_range(5..=7)),
            MotifShape::Crane => crane(rng.random_range(1..=3), rng.random_range(1..=3)),
        }
    }
}

fn cycle(n: usize) -> Topology {
    let edges = (0..n)
        .map(|i| (i.min((i + 1) % n), i.max((i + 1) % n)))
        .collect();
    (n, edges)
}

/// Triangle 0-1-2, boom 0-3, and two arms hanging from the boom tip with the
/// given lengths. `crane(1, 2)` is the canonical 7-node crane.
fn crane(arm_a: usize, arm_b: usize) -> Topology {
    let mut edges = vec![(0, 1), (1, 2), (0, 2), (0, 3)];
    let mut next = 4;
    for len in [arm_a, arm_b] {
        let mut prev = 3;
        for _ in 0..len {
            edges.push((prev, next));
            prev = next;
            next += 1;
        }
    }
    (next, edges)
}

/// Label-irrelevant base graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfounderShape {
    Tree,
    Ladder,
    Wheel,
}

impl ConfounderShape {
    pub const ALL: [ConfounderShape; 3] = [
        ConfounderShape::Tree,
        ConfounderShape::Ladder,
        ConfounderShape::Wheel,
    ];

    pub fn from_class(class: usize) -> Self {
        Self::ALL[class]
    }

    pub fn class(self) -> usize {
        self as usize
    }

    /// Samples a base graph; `enlarged` doubles the size ranges.
    pub fn sample(self, rng: &mut impl Rng, enlarged: bool) -> Topology {
        let k = if enlarged { 2 } else { 1 };
        match self {
            ConfounderShape::Tree => {
                let n = rng.random_range(10 * k..=20 * k);
                let edges = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
                (n, edges)
            }
            ConfounderShape::Ladder => {
                let len = rng.random_range(5 * k..=10 * k);
                let mut edges = Vec::new();
                for i in 0..len {
                    edges.push((i, len + i));
                    if i + 1 < len {
                        edges.push((i, i + 1));
                        edges.push((len + i, len + i + 1));
                    }
                }
                (2 * len, edges)
            }
            ConfounderShape::Wheel => {
                let ring = rng.random_range(8 * k..=12 * k);
                let mut edges: Vec<(usize, usize)> = (1..=ring).map(|i| (0, i)).collect();
                for i in 1..=ring {
                    let j = if i == ring { 1 } else { i + 1 };
                    edges.push((i.min(j), i.max(j)));
                }
                (ring + 1, edges)
            }
        }
    }
}
