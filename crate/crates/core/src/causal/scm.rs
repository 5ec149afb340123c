//! Finite structural causal models as conditional probability tables, and
//! their exactly enumerated joint distributions.

use super::CausalError;

/// Enumeration refuses joints with more states than this.
pub const MAX_STATES: u128 = 10_000_000;

/// Tolerance on every conditional-table row sum.
pub const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub card: usize,
    pub parents: Vec<usize>,
    /// One row of `card` probabilities per parent configuration; the first
    /// parent is the most significant digit of the row index.
    pub table: Vec<f64>,
    /// Latent variables take part in enumeration but not in discovery.
    pub latent: bool,
}

impl Variable {
    pub fn rows(&self) -> usize {
        self.table.len() / self.card
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.table[r * self.card..(r + 1) * self.card]
    }

    /// Every row puts all of its mass on one value.
    pub fn is_deterministic(&self) -> bool {
        (0..self.rows()).all(|r| self.row(r).iter().filter(|&&p| p != 0.0).count() == 1)
    }
}

/// Variables in topological order; parents always precede children.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscreteSCM {
    pub variables: Vec<Variable>,
}

impl DiscreteSCM {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn index(&self, name: &str) -> Result<usize, CausalError> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| CausalError::UnknownVariable(name.into()))
    }

    pub fn get(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    fn parent_indices(&self, parents: &[&str]) -> Result<(Vec<usize>, usize), CausalError> {
        let idx = parents
            .iter()
            .map(|p| self.index(p))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = idx.iter().map(|&i| self.variables[i].card).product();
        Ok((idx, rows))
    }

    /// Adds a variable with an explicit conditional table.
    pub fn add(
        &mut self,
        name: &str,
        card: usize,
        parents: &[&str],
        table: Vec<f64>,
    ) -> Result<usize, CausalError> {
        if self.get(name).is_some() {
            return Err(CausalError::DuplicateVariable(name.into()));
        }
        let invalid = |reason: String| CausalError::InvalidTable {
            variable: name.into(),
            reason,
        };
        if card == 0 {
            return Err(invalid("empty value space".into()));
        }
        let (parents, rows) = self.parent_indices(parents)?;
        if table.len() != rows * card {
            return Err(invalid(format!(
                "expected {} entries, found {}",
                rows * card,
                table.len()
            )));
        }
        for (r, row) in table.chunks(card).enumerate() {
            if row.iter().any(|&p| p.is_nan() || p < 0.0) {
                return Err(invalid(format!("row {r} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOLERANCE {
                return Err(invalid(format!("row {r} sums to {s}")));
            }
        }
        self.variables.push(Variable {
            name: name.into(),
            card,
            parents,
            table,
            latent: false,
        });
        Ok(self.variables.len() - 1)
    }

    /// Adds a variable whose value is `f(parent values)`.
    pub fn add_deterministic(
        &mut self,
        name: &str,
        card: usize,
        parents: &[&str],
        f: impl Fn(&[usize]) -> usize,
    ) -> Result<usize, CausalError> {
        let (idx, rows) = self.parent_indices(parents)?;
        let cards: Vec<usize> = idx.iter().map(|&i| self.variables[i].card).collect();
        let mut table = vec![0.0; rows * card];
        for r in 0..rows {
            let values = decode(r, &cards);
            let v = f(&values);
            if v >= card {
                return Err(CausalError::InvalidTable {
                    variable: name.into(),
                    reason: format!("function value {v} outside 0..{card}"),
                });
            }
            table[r * card + v] = 1.0;
        }
        self.add(name, card, parents, table)
    }

    pub fn set_latent(&mut self, name: &str) -> Result<(), CausalError> {
        let i = self.index(name)?;
        self.variables[i].latent = true;
        Ok(())
    }

    pub fn state_space(&self) -> u128 {
        self.variables.iter().map(|v| v.card as u128).product()
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }
}

/// Mixed-radix digits of `index`, most significant first.
pub(crate) fn decode(mut index: usize, cards: &[usize]) -> Vec<usize> {
    let mut out = vec![0; cards.len()];
    for (o, &c) in out.iter_mut().zip(cards).rev() {
        *o = index % c;
        index /= c;
    }
    out
}

/// Exact joint distribution over named finite variables (row-major: the
/// last variable varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    pub names: Vec<String>,
    pub cards: Vec<usize>,
    pub probs: Vec<f64>,
    pub latent: Vec<bool>,
}

/// Product of the conditional tables in topological order.
pub fn enumerate_joint(scm: &DiscreteSCM) -> Result<JointTable, CausalError> {
    let size = scm.state_space();
    if size > MAX_STATES {
        return Err(CausalError::StateSpace { size });
    }
    let cards: Vec<usize> = scm.variables.iter().map(|v| v.card).collect();
    let n = size as usize;
    let mut probs = Vec::with_capacity(n);
    let mut state = vec![0usize; cards.len()];
    for _ in 0..n {
        let mut p = 1.0;
        for (vi, v) in scm.variables.iter().enumerate() {
            let row = v
                .parents
                .iter()
                .fold(0, |acc, &pi| acc * cards[pi] + state[pi]);
            p *= v.table[row * v.card + state[vi]];
            if p == 0.0 {
                break;
            }
        }
        probs.push(p);
        for k in (0..cards.len()).rev() {
            state[k] += 1;
            if state[k] < cards[k] {
                break;
            }
            state[k] = 0;
        }
    }
    Ok(JointTable {
        names: scm.variables.iter().map(|v| v.name.clone()).collect(),
        cards,
        probs,
        latent: scm.variables.iter().map(|v| v.latent).collect(),
    })
}

impl JointTable {
    pub fn index(&self, name: &str) -> Result<usize, CausalError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CausalError::UnknownVariable(name.into()))
    }

    fn indices(&self, names: &[&str]) -> Result<Vec<usize>, CausalError> {
        names.iter().map(|n| self.index(n)).collect()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Marginal over `vars` (by position), in the order given.
    pub fn marginal_by_index(&self, vars: &[usize]) -> Vec<f64> {
        let sub_cards: Vec<usize> = vars.iter().map(|&v| self.cards[v]).collect();
        let size: usize = sub_cards.iter().product();
        let mut out = vec![0.0; size];
        let mut state = vec![0usize; self.cards.len()];
        for &p in &self.probs {
            if p != 0.0 {
                let idx = vars
                    .iter()
                    .zip(&sub_cards)
                    .fold(0, |acc, (&v, &c)| acc * c + state[v]);
                out[idx] += p;
            }
            for k in (0..self.cards.len()).rev() {
                state[k] += 1;
                if state[k] < self.cards[k] {
                    break;
                }
                state[k] = 0;
            }
        }
        out
    }

    /// The joint restricted to `names`, as a new table.
    pub fn project(&self, names: &[&str]) -> Result<JointTable, CausalError> {
        let idx = self.indices(names)?;
        Ok(JointTable {
            names: names.iter().map(|s| s.to_string()).collect(),
            cards: idx.iter().map(|&i| self.cards[i]).collect(),
            probs: self.marginal_by_index(&idx),
            latent: idx.iter().map(|&i| self.latent[i]).collect(),
        })
    }

    /// The joint with latent variables summed out.
    pub fn observed(&self) -> JointTable {
        let names: Vec<&str> = self
            .names
            .iter()
            .zip(&self.latent)
            .filter(|(_, &l)| !l)
            .map(|(n, _)| n.as_str())
            .collect();
        self.project(&names).expect("names come from this table")
    }

    pub fn entropy_by_index(&self, vars: &[usize]) -> f64 {
        if vars.is_empty() {
            return 0.0;
        }
        -self
            .marginal_by_index(vars)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// `H(vars)` in nats.
    pub fn entropy(&self, vars: &[&str]) -> Result<f64, CausalError> {
        Ok(self.entropy_by_index(&self.indices(vars)?))
    }

    /// `I(A;B|C) = H(A,C) + H(B,C) − H(A,B,C) − H(C)`, clamped at zero.
    pub fn cmi_by_index(&self, a: &[usize], b: &[usize], given: &[usize]) -> f64 {
        let cat = |x: &[usize], y: &[usize]| [x, y].concat();
        let v = self.entropy_by_index(&cat(a, given)) + self.entropy_by_index(&cat(b, given))
            - self.entropy_by_index(&[a, b, given].concat())
            - self.entropy_by_index(given);
        v.max(0.0)
    }

    pub fn mutual_information(
        &self,
        a: &[&str],
        b: &[&str],
        given: &[&str],
    ) -> Result<f64, CausalError> {
        Ok(self.cmi_by_index(&self.indices(a)?, &self.indices(b)?, &self.indices(given)?))
    }

    /// Mutual information divided by `H(norm)`; `None` when `H(norm) = 0`.
    pub fn normalized_mi(
        &self,
        a: &[&str],
        b: &[&str],
        given: &[&str],
        norm: &[&str],
    ) -> Result<Option<f64>, CausalError> {
        let h = self.entropy(norm)?;
        let i = self.mutual_information(a, b, given)?;
        Ok((h > 0.0).then(|| i / h))
    }

    /// `p(child | given)` as rows indexed by the `given` configuration;
    /// rows with zero mass are left as zeros.
    pub fn conditional(&self, child: &str, given: &[&str]) -> Result<Vec<Vec<f64>>, CausalError> {
        let c = self.index(child)?;
        let g = self.indices(given)?;
        let joint = self.marginal_by_index(&[g.clone(), vec![c]].concat());
        let card = self.cards[c];
        Ok(joint
            .chunks(card)
            .map(|row| {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter().map(|p| p / s).collect()
                } else {
                    vec![0.0; card]
                }
            })
            .collect())
    }
}
