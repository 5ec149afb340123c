//! Numerical checks of the representation bound, the output sandwich and the coverage gap.

use serde::Serialize;

use super::pattern::{S_STAR, S_TILDE};
use super::scm::{enumerate_joint, DiscreteSCM, JointTable};
use super::CausalError;
use crate::encoder::{EncoderError, Model};
use crate::expert::{expert_embed, ExpertModel};
use crate::graphs::{GraphSample, MorphologyClass};
use crate::numerics::kl_divergence;

pub const BOUND_TOLERANCE: f64 = 1e-9;

/// Parent sets each variable of the factor model may use.
fn allowed_parents(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "L" => &[],
        S_STAR | S_TILDE => &["L"],
        "X" => &[S_STAR, S_TILDE],
        "C" => &[],
        "G" => &["X", "C"],
        "R" | "T~" => &["G"],
        "T" => &["R"],
        _ => return None,
    })
}

/// Problems that keep `scm` from being an instance of the factor model;
/// empty when it conforms. `required` variables must be present.
pub fn conformance_issues(scm: &DiscreteSCM, required: &[&str]) -> Vec<String> {
    let mut issues = Vec::new();
    for r in required {
        if scm.get(r).is_none() {
            issues.push(format!("missing variable {r}"));
        }
    }
    for v in &scm.variables {
        let Some(allowed) = allowed_parents(&v.name) else {
            issues.push(format!("unexpected variable {}", v.name));
            continue;
        };
        for &p in &v.parents {
            let parent = &scm.variables[p].name;
            if !allowed.contains(&parent.as_str()) {
                issues.push(format!("{} has disallowed parent {parent}", v.name));
            }
        }
        if v.name == "L" && !v.latent {
            issues.push("L must be latent".into());
        }
    }
    issues
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    /// `I(R;C) / H(G)`.
    pub lhs: f64,
    /// `1 − I(R;S~) / H(G)`.
    pub rhs: f64,
    pub i_rc: f64,
    pub i_rs: f64,
    pub h_g: f64,
    /// `H(G) = 0`: the bound holds vacuously.
    pub degenerate: bool,
    pub holds: bool,
}

/// The representation bound `I(R;C) ≤ 1 − I(R;S~)` with MI normalized by `H(G)`.
pub fn check_representation_bound(scm: &DiscreteSCM) -> Result<BoundCheck, CausalError> {
    let mut issues = conformance_issues(scm, &[S_TILDE, "X", "C", "G", "R"]);
    let g = scm.get("G").expect("checked above");
    if issues.is_empty() && !g.is_deterministic() {
        issues.push("G is not a function of (X, C)".into());
    }
    if !issues.is_empty() {
        return Err(CausalError::NonConforming(issues));
    }
    let joint = enumerate_joint(scm)?;
    representation_bound_on_joint(&joint)
}

pub fn representation_bound_on_joint(joint: &JointTable) -> Result<BoundCheck, CausalError> {
    let h_g = joint.entropy(&["G"])?;
    let i_rc = joint.mutual_information(&["R"], &["C"], &[])?;
    let i_rs = joint.mutual_information(&["R"], &[S_TILDE], &[])?;
    if h_g <= 0.0 {
        return Ok(BoundCheck {
            lhs: 0.0,
            rhs: 1.0,
            i_rc,
            i_rs,
            h_g,
            degenerate: true,
            holds: true,
        });
    }
    let lhs = i_rc / h_g;
    let rhs = 1.0 - i_rs / h_g;
    Ok(BoundCheck {
        lhs,
        rhs,
        i_rc,
        i_rs,
        h_g,
        degenerate: false,
        holds: lhs <= rhs + BOUND_TOLERANCE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SandwichStatus {
    /// `I(S~;T) = I(S~;T~)` and the sandwich holds.
    Maximized,
    /// The sandwich holds but the equality does not (premise not met).
    NotMaximized,
    /// The sandwich fails, or the equality fails although the premise holds.
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichCheck {
    pub i_s_t: f64,
    pub i_s_tt: f64,
    pub i_s_r: f64,
    pub i_s_g: f64,
    /// `I(T~;S~) = I(G;S~)`.
    pub effective_expert: bool,
    /// `p(t|s~) = p(t~|s~)`.
    pub matched_conditionals: bool,
    pub sandwich: bool,
    pub status: SandwichStatus,
}

impl SandwichCheck {
    pub fn premise(&self) -> bool {
        self.effective_expert && self.matched_conditionals
    }

    pub fn passed(&self) -> bool {
        self.status != SandwichStatus::Violated
    }
}

pub fn check_output_sandwich(scm: &DiscreteSCM) -> Result<SandwichCheck, CausalError> {
    let issues = conformance_issues(scm, &[S_TILDE, "X", "G", "R", "T~", "T"]);
    if !issues.is_empty() {
        return Err(CausalError::NonConforming(issues));
    }
    let joint = enumerate_joint(scm)?;
    output_sandwich_on_joint(&joint)
}

pub fn output_sandwich_on_joint(joint: &JointTable) -> Result<SandwichCheck, CausalError> {
    let mi = |a: &str| joint.mutual_information(&[S_TILDE], &[a], &[]);
    let (i_s_t, i_s_tt, i_s_r, i_s_g) = (mi("T")?, mi("T~")?, mi("R")?, mi("G")?);
    let effective_expert = (i_s_tt - i_s_g).abs() <= BOUND_TOLERANCE;
    let t = joint.conditional("T", &[S_TILDE])?;
    let tt = joint.conditional("T~", &[S_TILDE])?;
    let matched_conditionals = t.len() == tt.len()
        && t.iter().zip(&tt).all(|(a, b)| {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|(x, y)| (x - y).abs() <= BOUND_TOLERANCE)
        });
    let sandwich = i_s_t <= i_s_r + BOUND_TOLERANCE && i_s_r <= i_s_tt + BOUND_TOLERANCE;
    let equal = (i_s_t - i_s_tt).abs() <= BOUND_TOLERANCE;
    let premise = effective_expert && matched_conditionals;
    let status = if sandwich && equal {
        SandwichStatus::Maximized
    } else if sandwich && !premise {
        SandwichStatus::NotMaximized
    } else {
        SandwichStatus::Violated
    };
    Ok(SandwichCheck {
        i_s_t,
        i_s_tt,
        i_s_r,
        i_s_g,
        effective_expert,
        matched_conditionals,
        sandwich,
        status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub graphs: usize,
    /// Mean `KL(r^P ‖ f^P)` over the corpus.
    pub loss_lc: f64,
    /// Plug-in `I(S~;T)` from (morphology class, argmax f^P) counts.
    pub i_s_t: f64,
    /// Plug-in `I(S~;T~)` from (morphology class, argmax r^P) counts.
    pub i_s_tt: f64,
    pub gap: f64,
    pub class_counts: Vec<usize>,
    pub missing_classes: Vec<String>,
}

impl CoverageReport {
    pub fn covered(&self) -> bool {
        self.missing_classes.is_empty()
    }

    /// The calibrated claim: a small `L_c` on a covering corpus forces a small gap.
    pub fn holds(&self, lc_threshold: f64, gap_threshold: f64) -> bool {
        self.covered() && (self.loss_lc > lc_threshold || self.gap <= gap_threshold)
    }
}

/// Plug-in mutual information of paired labels in nats.
pub fn plugin_mutual_information(pairs: &[(usize, usize)], na: usize, nb: usize) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; na * nb];
    for &(a, b) in pairs {
        counts[a * nb + b] += 1;
    }
    let n = pairs.len() as f64;
    let pa: Vec<f64> = (0..na)
        .map(|a| counts[a * nb..(a + 1) * nb].iter().sum::<usize>() as f64 / n)
        .collect();
    let pb: Vec<f64> = (0..nb)
        .map(|b| (0..na).map(|a| counts[a * nb + b]).sum::<usize>() as f64 / n)
        .collect();
    let mut total = 0.0;
    for a in 0..na {
        for b in 0..nb {
            let c = counts[a * nb + b];
            if c > 0 {
                let p = c as f64 / n;
                total += p * (p / (pa[a] * pb[b])).ln();
            }
        }
    }
    total.max(0.0)
}

/// Compares what `f^P` and `r^P` reveal about the morphology class.
pub fn check_coverage_gap(
    corpus: &[GraphSample],
    model: &Model,
    expert: &ExpertModel,
) -> Result<CoverageReport, CausalError> {
    let k = MorphologyClass::COUNT;
    let mut class_counts = vec![0usize; k];
    let mut model_pairs = Vec::with_capacity(corpus.len());
    let mut expert_pairs = Vec::with_capacity(corpus.len());
    let mut lc = 0.0;
    for g in corpus {
        let d = expert_embed(g)?;
        let s = d.class().index();
        let target = expert.project(&d);
        let reps = model.encode(g)?;
        let predicted = model.project_embodiment(&reps, &g.embodiment_nodes)?;
        lc += kl_divergence(target.as_slice(), predicted.as_slice()).map_err(EncoderError::from)?;
        class_counts[s] += 1;
        model_pairs.push((s, predicted.argmax()));
        expert_pairs.push((s, target.argmax()));
    }
    let i_s_t = plugin_mutual_information(&model_pairs, k, k);
    let i_s_tt = plugin_mutual_information(&expert_pairs, k, k);
    Ok(CoverageReport {
        graphs: corpus.len(),
        loss_lc: lc / corpus.len().max(1) as f64,
        i_s_t,
        i_s_tt,
        gap: (i_s_t - i_s_tt).abs(),
        missing_classes: MorphologyClass::ALL
            .iter()
            .filter(|c| class_counts[c.index()] == 0)
            .map(|c| c.name().to_string())
            .collect(),
        class_counts,
    })
}
