//! Partially oriented causal graphs and d-separation.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::CausalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Undirected,
    /// `a → b`.
    Directed,
    /// `a ⇠⇢ b`: dependence through an unobserved common cause.
    DashedBidirected,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatternEdge {
    pub a: String,
    pub b: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<PatternEdge>,
}

pub const S_STAR: &str = "S*";
pub const S_TILDE: &str = "S~";

impl PatternGraph {
    pub fn new(nodes: &[&str]) -> Self {
        Self {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: Vec::new(),
        }
    }

    pub fn add(&mut self, a: &str, b: &str, kind: EdgeKind) -> &mut Self {
        self.edges.push(PatternEdge {
            a: a.into(),
            b: b.into(),
            kind,
        });
        self
    }

    /// The causal graph of the factor model: `S*, S~ → X → G ← C`,
    /// `G → R → T`, `G → T~`, with `S~ ⇠⇢ S*`.
    pub fn factor_model() -> Self {
        let mut g = Self::new(&[S_STAR, S_TILDE, "X", "C", "G", "R", "T~", "T"]);
        for (a, b) in [
            (S_STAR, "X"),
            (S_TILDE, "X"),
            ("X", "G"),
            ("C", "G"),
            ("G", "R"),
            ("G", "T~"),
            ("R", "T"),
        ] {
            g.add(a, b, EdgeKind::Directed);
        }
        g.add(S_TILDE, S_STAR, EdgeKind::DashedBidirected);
        g
    }

    /// Edge list with symmetric edges written in name order, sorted.
    pub fn canonical_edges(&self) -> Vec<PatternEdge> {
        let mut out: Vec<PatternEdge> = self
            .edges
            .iter()
            .map(|e| {
                if e.kind != EdgeKind::Directed && e.a > e.b {
                    PatternEdge {
                        a: e.b.clone(),
                        b: e.a.clone(),
                        kind: e.kind,
                    }
                } else {
                    e.clone()
                }
            })
            .collect();
        out.sort();
        out
    }

    pub fn same_pattern(&self, other: &PatternGraph) -> bool {
        let a: BTreeSet<&String> = self.nodes.iter().collect();
        let b: BTreeSet<&String> = other.nodes.iter().collect();
        a == b && self.canonical_edges() == other.canonical_edges()
    }

    fn node(&self, name: &str) -> Result<usize, CausalError> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CausalError::UnknownVariable(name.into()))
    }

    /// Parent lists of the DAG obtained by giving every dashed edge its own
    /// latent parent; latent nodes are appended after the named ones.
    pub(crate) fn expanded_parents(&self) -> Result<Vec<Vec<usize>>, CausalError> {
        let n = self.nodes.len();
        let mut parents = vec![Vec::new(); n];
        for e in &self.edges {
            let (a, b) = (self.node(&e.a)?, self.node(&e.b)?);
            match e.kind {
                EdgeKind::Directed => parents[b].push(a),
                EdgeKind::DashedBidirected => {
                    let latent = parents.len();
                    parents.push(Vec::new());
                    parents[a].push(latent);
                    parents[b].push(latent);
                }
                EdgeKind::Undirected => {
                    return Err(CausalError::InvalidPattern(format!(
                        "undirected edge {} - {} in d-separation query",
                        e.a, e.b
                    )))
                }
            }
        }
        Ok(parents)
    }
}

/// Whether `a` and `b` are d-separated by `given` (reachability search;
/// dashed edges act as latent common parents).
pub fn d_separated(
    pattern: &PatternGraph,
    a: &str,
    b: &str,
    given: &[&str],
) -> Result<bool, CausalError> {
    let parents = pattern.expanded_parents()?;
    let n = parents.len();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let (a, b) = (pattern.node(a)?, pattern.node(b)?);
    let mut observed = vec![false; n];
    for g in given {
        observed[pattern.node(g)?] = true;
    }
    // nodes that are observed or have an observed descendant
    let mut opens_collider = observed.clone();
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| observed[v]).collect();
    while let Some(v) = queue.pop_front() {
        for &p in &parents[v] {
            if !opens_collider[p] {
                opens_collider[p] = true;
                queue.push_back(p);
            }
        }
    }
    // (node, arrived from a child)
    let mut seen = vec![[false; 2]; n];
    let mut stack = vec![(a, true)];
    while let Some((v, up)) = stack.pop() {
        if seen[v][up as usize] {
            continue;
        }
        seen[v][up as usize] = true;
        if v == b && !observed[v] {
            return Ok(false);
        }
        if up {
            if !observed[v] {
                stack.extend(parents[v].iter().map(|&p| (p, true)));
                stack.extend(children[v].iter().map(|&c| (c, false)));
            }
        } else {
            if !observed[v] {
                stack.extend(children[v].iter().map(|&c| (c, false)));
            }
            if opens_collider[v] {
                stack.extend(parents[v].iter().map(|&p| (p, true)));
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute force: some simple path in the skeleton of the expanded DAG is
    /// open given `z`.
    fn connected_by_path(parents: &[Vec<usize>], a: usize, b: usize, z: &[bool]) -> bool {
        let n = parents.len();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let descendants_observed = |v: usize| {
            let mut stack = vec![v];
            let mut seen = vec![false; n];
            while let Some(u) = stack.pop() {
                if z[u] {
                    return true;
                }
                if !seen[u] {
                    seen[u] = true;
                    stack.extend(&children[u]);
                }
            }
            false
        };
        let into = |from: usize, to: usize| parents[to].contains(&from);
        fn walk(
            path: &mut Vec<usize>,
            b: usize,
            parents: &[Vec<usize>],
            children: &[Vec<usize>],
            ok: &dyn Fn(&[usize]) -> bool,
        ) -> bool {
            let last = *path.last().unwrap();
            if last == b {
                return ok(path);
            }
            let nbrs: Vec<usize> = parents[last]
                .iter()
                .chain(&children[last])
                .copied()
                .collect();
            for v in nbrs {
                if !path.contains(&v) {
                    path.push(v);
                    if walk(path, b, parents, children, ok) {
                        return true;
                    }
                    path.pop();
                }
            }
            false
        }
        let ok = |path: &[usize]| {
            path.windows(3).all(|w| {
                let (x, v, y) = (w[0], w[1], w[2]);
                if into(x, v) && into(y, v) {
                    descendants_observed(v)
                } else {
                    !z[v]
                }
            })
        };
        walk(&mut vec![a], b, parents, &children, &ok)
    }

    #[test]
    fn factor_model_queries() {
        let g = PatternGraph::factor_model();
        assert!(d_separated(&g, "C", S_TILDE, &[]).unwrap());
        assert!(!d_separated(&g, "C", "R", &[]).unwrap());
        assert!(d_separated(&g, S_TILDE, "R", &["G"]).unwrap());
        assert!(!d_separated(&g, S_TILDE, "C", &["G"]).unwrap());
        assert!(!d_separated(&g, S_TILDE, S_STAR, &[]).unwrap());
        assert!(d_separated(&g, "X", "T", &["R"]).unwrap());
        assert!(d_separated(&g, "G", "T", &["R"]).unwrap());
        assert!(matches!(
            d_separated(&g, "Q", "R", &[]),
            Err(CausalError::UnknownVariable(_))
        ));
    }

    #[test]
    fn undirected_edges_rejected() {
        let mut g = PatternGraph::new(&["A", "B"]);
        g.add("A", "B", EdgeKind::Undirected);
        assert!(d_separated(&g, "A", "B", &[]).is_err());
    }

    #[test]
    fn agrees_with_path_enumeration_on_random_dags() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let names: Vec<String> = (0..7).map(|i| format!("V{i}")).collect();
        for _ in 0..60 {
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let mut g = PatternGraph::new(&refs);
            for i in 0..7 {
                for j in i + 1..7 {
                    let r: f64 = rng.random();
                    if r < 0.3 {
                        g.add(refs[i], refs[j], EdgeKind::Directed);
                    } else if r < 0.36 {
                        g.add(refs[i], refs[j], EdgeKind::DashedBidirected);
                    }
                }
            }
            let parents = g.expanded_parents().unwrap();
            for _ in 0..20 {
                let a = rng.random_range(0..7);
                let b = (a + rng.random_range(1..7)) % 7;
                let mut z = vec![false; parents.len()];
                let mut given = Vec::new();
                for v in 0..7 {
                    if v != a && v != b && rng.random_bool(0.3) {
                        z[v] = true;
                        given.push(refs[v]);
                    }
                }
                let fast = d_separated(&g, refs[a], refs[b], &given).unwrap();
                assert_eq!(
                    fast,
                    !connected_by_path(&parents, a, b, &z),
                    "{g:?} {a} {b} {given:?}"
                );
            }
        }
    }
}
