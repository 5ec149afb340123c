//! The IC discovery algorithm: separating-set skeleton, v-structures,
//! background orientations and Meek's first rule.

use super::pattern::{EdgeKind, PatternGraph};
use super::scm::JointTable;
use super::CausalError;

/// Conditional-MI threshold below which the exact oracle answers "independent".
pub const CI_THRESHOLD: f64 = 1e-12;

pub trait CiOracle {
    fn independent(&self, a: usize, b: usize, given: &[usize]) -> bool;
}

/// Exact oracle over an enumerated joint.
pub struct JointOracle<'a> {
    pub joint: &'a JointTable,
    pub threshold: f64,
}

impl<'a> JointOracle<'a> {
    pub fn new(joint: &'a JointTable) -> Self {
        Self {
            joint,
            threshold: CI_THRESHOLD,
        }
    }
}

impl CiOracle for JointOracle<'_> {
    fn independent(&self, a: usize, b: usize, given: &[usize]) -> bool {
        self.joint.cmi_by_index(&[a], &[b], given) <= self.threshold
    }
}

#[derive(Debug, Clone, Default)]
pub struct IcOptions {
    /// Orientations known in advance, as `(cause, effect)` names.
    pub background: Vec<(String, String)>,
    /// Emit edges left undirected after propagation as dashed-bidirected.
    pub dashed_unresolved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mark {
    None,
    Undirected,
    /// Arrow into the second index of the pair it is stored under.
    Out,
    In,
    Both,
}

struct Marks {
    n: usize,
    m: Vec<Mark>,
}

impl Marks {
    fn get(&self, a: usize, b: usize) -> Mark {
        self.m[a * self.n + b]
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.get(a, b) != Mark::None
    }

    fn set_undirected(&mut self, a: usize, b: usize) {
        self.m[a * self.n + b] = Mark::Undirected;
        self.m[b * self.n + a] = Mark::Undirected;
    }

    /// Orients `a → b`; an opposite orientation turns the edge bidirected.
    fn orient(&mut self, a: usize, b: usize) -> bool {
        let (forward, backward) = match self.get(a, b) {
            Mark::Undirected => (Mark::Out, Mark::In),
            Mark::In => (Mark::Both, Mark::Both),
            _ => return false,
        };
        self.m[a * self.n + b] = forward;
        self.m[b * self.n + a] = backward;
        true
    }
}

/// Runs IC over variables `names` (indices into the oracle's numbering).
pub fn ic_discover(
    oracle: &dyn CiOracle,
    names: &[&str],
    options: &IcOptions,
) -> Result<PatternGraph, CausalError> {
    let n = names.len();
    let mut marks = Marks {
        n,
        m: vec![Mark::None; n * n],
    };
    let mut sepsets: Vec<Option<Vec<usize>>> = vec![None; n * n];

    // step 1: skeleton
    for a in 0..n {
        for b in a + 1..n {
            let others: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
            let mut found = None;
            'search: for size in 0..=others.len() {
                for subset in subsets_of_size(&others, size) {
                    let ab = oracle.independent(a, b, &subset);
                    let ba = oracle.independent(b, a, &subset);
                    if ab != ba {
                        return Err(CausalError::OracleInconsistent {
                            a: names[a].into(),
                            b: names[b].into(),
                            given: subset.iter().map(|&v| names[v].to_string()).collect(),
                        });
                    }
                    if ab {
                        found = Some(subset);
                        break 'search;
                    }
                }
            }
            match found {
                Some(s) => {
                    sepsets[a * n + b] = Some(s.clone());
                    sepsets[b * n + a] = Some(s);
                }
                None => marks.set_undirected(a, b),
            }
        }
    }

    // step 2: v-structures a → c ← b
    for c in 0..n {
        for a in 0..n {
            for b in a + 1..n {
                if a == c || b == c || marks.adjacent(a, b) {
                    continue;
                }
                if !(marks.adjacent(a, c) && marks.adjacent(b, c)) {
                    continue;
                }
                let sep = sepsets[a * n + b]
                    .as_ref()
                    .expect("non-adjacent pairs have a sepset");
                if !sep.contains(&c) {
                    marks.orient(a, c);
                    marks.orient(b, c);
                }
            }
        }
    }
    for (cause, effect) in &options.background {
        let i = position(names, cause)?;
        let j = position(names, effect)?;
        if marks.adjacent(i, j) {
            marks.orient(i, j);
        }
    }

    // step 3: Meek rule 1 until nothing changes
    loop {
        let mut changed = false;
        for a in 0..n {
            for b in 0..n {
                if marks.get(a, b) != Mark::Out {
                    continue;
                }
                for c in 0..n {
                    if c != a && marks.get(b, c) == Mark::Undirected && !marks.adjacent(a, c) {
                        changed |= marks.orient(b, c);
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut pattern = PatternGraph::new(names);
    for a in 0..n {
        for b in a + 1..n {
            match marks.get(a, b) {
                Mark::None => {}
                Mark::Out => {
                    pattern.add(names[a], names[b], EdgeKind::Directed);
                }
                Mark::In => {
                    pattern.add(names[b], names[a], EdgeKind::Directed);
                }
                Mark::Both => {
                    pattern.add(names[a], names[b], EdgeKind::DashedBidirected);
                }
                Mark::Undirected => {
                    let kind = if options.dashed_unresolved {
                        EdgeKind::DashedBidirected
                    } else {
                        EdgeKind::Undirected
                    };
                    pattern.add(names[a], names[b], kind);
                }
            }
        }
    }
    Ok(pattern)
}

fn position(names: &[&str], name: &str) -> Result<usize, CausalError> {
    names
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| CausalError::UnknownVariable(name.into()))
}

/// All `size`-element subsets of `items`, in lexicographic order.
fn subsets_of_size(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn rec(
        items: &[usize],
        size: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, size, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, size, 0, &mut current, &mut out);
    out
}

/// IC over the observed variables of an enumerated joint.
pub fn ic_from_joint(joint: &JointTable, options: &IcOptions) -> Result<PatternGraph, CausalError> {
    let observed = joint.observed();
    let names: Vec<&str> = observed.names.iter().map(String::as_str).collect();
    ic_discover(&JointOracle::new(&observed), &names, options)
}
