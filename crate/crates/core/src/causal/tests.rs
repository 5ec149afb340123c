use std::f64::consts::LN_2;

use proptest::prelude::*;

use super::*;

fn coin(scm: &mut DiscreteSCM, name: &str, p: f64) {
    scm.add(name, 2, &[], vec![1.0 - p, p]).unwrap();
}

#[test]
fn copy_chain_entropies() {
    let mut scm = DiscreteSCM::new();
    coin(&mut scm, "A", 0.5);
    scm.add_deterministic("B", 2, &["A"], |v| v[0]).unwrap();
    let joint = enumerate_joint(&scm).unwrap();
    assert_eq!(joint.probs.len(), 4);
    assert!((joint.total() - 1.0).abs() < 1e-15);
    assert!((joint.entropy(&["A"]).unwrap() - LN_2).abs() < 1e-12);
    assert!((joint.entropy(&["A", "B"]).unwrap() - LN_2).abs() < 1e-12);
    let i = joint.mutual_information(&["A"], &["B"], &[]).unwrap();
    assert!((i - LN_2).abs() < 1e-12);
    let self_info = joint.mutual_information(&["A"], &["A"], &[]).unwrap();
    assert!((self_info - joint.entropy(&["A"]).unwrap()).abs() < 1e-12);
}

#[test]
fn independent_coins_have_product_joint() {
    let mut scm = DiscreteSCM::new();
    coin(&mut scm, "A", 0.3);
    coin(&mut scm, "B", 0.8);
    let joint = enumerate_joint(&scm).unwrap();
    let expected = [0.7 * 0.2, 0.7 * 0.8, 0.3 * 0.2, 0.3 * 0.8];
    for (p, e) in joint.probs.iter().zip(expected) {
        assert!((p - e).abs() < 1e-15);
    }
    assert!(joint.mutual_information(&["A"], &["B"], &[]).unwrap() < 1e-15);
}

#[test]
fn collider_conditioning_creates_dependence() {
    let mut scm = DiscreteSCM::new();
    coin(&mut scm, "A", 0.5);
    coin(&mut scm, "B", 0.5);
    scm.add_deterministic("X", 2, &["A", "B"], |v| v[0] ^ v[1])
        .unwrap();
    let joint = enumerate_joint(&scm).unwrap();
    assert!(joint.mutual_information(&["A"], &["B"], &[]).unwrap() < 1e-15);
    let cmi = joint.mutual_information(&["A"], &["B"], &["X"]).unwrap();
    assert!((cmi - LN_2).abs() < 1e-12);
}

#[test]
fn invalid_models_rejected() {
    let mut scm = DiscreteSCM::new();
    coin(&mut scm, "A", 0.5);
    assert!(matches!(
        scm.add("A", 2, &[], vec![0.5, 0.5]),
        Err(CausalError::DuplicateVariable(_))
    ));
    assert!(matches!(
        scm.add("B", 2, &["Z"], vec![0.5, 0.5]),
        Err(CausalError::UnknownVariable(_))
    ));
    assert!(matches!(
        scm.add("B", 2, &[], vec![0.5, 0.6]),
        Err(CausalError::InvalidTable { .. })
    ));
    assert!(matches!(
        scm.add("B", 2, &["A"], vec![0.5, 0.5]),
        Err(CausalError::InvalidTable { .. })
    ));
    let mut big = DiscreteSCM::new();
    for i in 0..8 {
        big.add(&format!("V{i}"), 10, &[], vec![0.1; 10]).unwrap();
    }
    assert!(matches!(
        enumerate_joint(&big),
        Err(CausalError::StateSpace { .. })
    ));
}

#[test]
fn bound_reference_is_tight() {
    let r = check_representation_bound(&reference_bound_scm()).unwrap();
    assert!((r.h_g - 2.0 * LN_2).abs() < 1e-12);
    assert!((r.lhs - 0.5).abs() < 1e-12);
    assert!((r.rhs - 0.5).abs() < 1e-12);
    assert!(r.holds && !r.degenerate);
}

#[test]
fn bound_constant_representation() {
    let mut scm = DiscreteSCM::new();
    coin(&mut scm, S_TILDE, 0.5);
    coin(&mut scm, "C", 0.5);
    scm.add_deterministic("X", 2, &[S_TILDE], |v| v[0]).unwrap();
    scm.add_deterministic("G", 4, &["X", "C"], |v| v[0] * 2 + v[1])
        .unwrap();
    scm.add_deterministic("R", 1, &["G"], |_| 0).unwrap();
    let r = check_representation_bound(&scm).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert_eq!(r.rhs, 1.0);
    assert!(r.holds);
}

#[test]
fn bound_flags_leaking_representation() {
    let mut scm = DiscreteSCM::new();
    coin(&mut scm, S_TILDE, 0.5);
    coin(&mut scm, "C", 0.5);
    scm.add_deterministic("X", 2, &[S_TILDE], |v| v[0]).unwrap();
    scm.add_deterministic("G", 4, &["X", "C"], |v| v[0] * 2 + v[1])
        .unwrap();
    scm.add_deterministic("R", 2, &["G", "C"], |v| v[1])
        .unwrap();
    match check_representation_bound(&scm) {
        Err(CausalError::NonConforming(issues)) => {
            assert!(issues
                .iter()
                .any(|i| i.contains("R has disallowed parent C")));
        }
        other => panic!("expected non-conforming, got {other:?}"),
    }
}

#[test]
fn bound_holds_on_random_models() {
    for i in 0..200 {
        let scm = random_bound_scm(&mut seeded(7, 1, i));
        let r = check_representation_bound(&scm).unwrap();
        assert!(r.holds, "seed {i}: {r:?}");
        assert!(r.i_rc >= 0.0 && r.i_rs >= 0.0);
    }
}

#[test]
fn sandwich_reference_is_maximized() {
    let r = check_output_sandwich(&reference_sandwich_scm()).unwrap();
    assert!((r.i_s_t - LN_2).abs() < 1e-12);
    assert!((r.i_s_tt - LN_2).abs() < 1e-12);
    assert!(r.premise());
    assert_eq!(r.status, SandwichStatus::Maximized);
}

#[test]
fn sandwich_uninformed_output_is_not_maximized() {
    let mut scm = DiscreteSCM::new();
    coin(&mut scm, S_TILDE, 0.5);
    scm.add_deterministic("X", 2, &[S_TILDE], |v| v[0]).unwrap();
    scm.add_deterministic("G", 2, &["X"], |v| v[0]).unwrap();
    scm.add_deterministic("R", 2, &["G"], |v| v[0]).unwrap();
    scm.add_deterministic("T~", 2, &["G"], |v| v[0]).unwrap();
    scm.add("T", 2, &["R"], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
    let r = check_output_sandwich(&scm).unwrap();
    assert!(r.i_s_t < 1e-15);
    assert!(!r.matched_conditionals);
    assert_eq!(r.status, SandwichStatus::NotMaximized);
    assert!(r.passed());
}

#[test]
fn sandwich_holds_on_random_models() {
    for i in 0..100 {
        let scm = random_sandwich_scm(&mut seeded(7, 2, i));
        let r = check_output_sandwich(&scm).unwrap();
        assert_eq!(r.status, SandwichStatus::Maximized, "seed {i}: {r:?}");
    }
}

#[test]
fn ic_recovers_factor_pattern() {
    let expected = PatternGraph::factor_model();
    for i in 0..IC_RUNS as u64 {
        let scm = random_faithful_scm(&mut seeded(11, 3, i));
        let joint = enumerate_joint(&scm).unwrap();
        let found = ic_from_joint(&joint, &ic_options()).unwrap();
        assert!(
            found.same_pattern(&expected),
            "seed {i}: {:?}",
            found.canonical_edges()
        );
    }
}

#[test]
fn verification_report_passes() {
    let report = run_verification(3, 5);
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert_eq!(
        report.checks.len(),
        3 + 10 + IC_RUNS + factor_dsep_table().len()
    );
    let empty = run_verification(3, 0);
    assert!(empty.passed);
    assert!(empty.checks.iter().any(|c| c.name.starts_with("ic/")));
    assert!(empty.checks.iter().any(|c| c.name.starts_with("dsep/")));
    let leak = empty
        .checks
        .iter()
        .find(|c| c.name == "conformance/leaking-representation")
        .unwrap();
    assert!(leak.passed);
    assert_eq!(leak.witnesses["status"], "non-conforming");
}

#[test]
fn plugin_mi_examples() {
    let copy = [(0, 0), (1, 1), (0, 0), (1, 1)];
    assert!((plugin_mutual_information(&copy, 2, 2) - LN_2).abs() < 1e-12);
    let indep = [(0, 0), (0, 1), (1, 0), (1, 1)];
    assert!(plugin_mutual_information(&indep, 2, 2).abs() < 1e-15);
    assert_eq!(plugin_mutual_information(&[], 2, 2), 0.0);
}

#[test]
fn coverage_requires_all_classes() {
    use crate::encoder::{EncoderConfig, Model};
    use crate::expert::ExpertModel;
    use crate::graphs::{generate_dataset, DatasetSpec};
    let corpus = generate_dataset(&DatasetSpec {
        count: 12,
        ..DatasetSpec::default()
    })
    .unwrap();
    let model = Model::new(EncoderConfig::default(), 1).unwrap();
    let expert = ExpertModel::default();
    let full = check_coverage_gap(&corpus, &model, &expert).unwrap();
    assert_eq!(full.graphs, 12);
    assert!(full.covered());
    assert!(full.loss_lc > 0.0);
    let first = corpus[0].clone();
    let single = check_coverage_gap(std::slice::from_ref(&first), &model, &expert).unwrap();
    assert!(!single.covered());
    assert_eq!(single.missing_classes.len(), 3);
    assert!(!single.holds(0.02, 0.05));
}

fn prob_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn data_processing_inequality(
        a in prob_vec(3),
        b in prop::collection::vec(prob_vec(3), 3),
        c in prop::collection::vec(prob_vec(2), 3),
    ) {
        let mut scm = DiscreteSCM::new();
        scm.add("A", 3, &[], a).unwrap();
        scm.add("B", 3, &["A"], b.concat()).unwrap();
        scm.add("C", 2, &["B"], c.concat()).unwrap();
        let joint = enumerate_joint(&scm).unwrap();
        let ab = joint.mutual_information(&["A"], &["B"], &[]).unwrap();
        let ac = joint.mutual_information(&["A"], &["C"], &[]).unwrap();
        prop_assert!(ac <= ab + 1e-12);
        prop_assert!(joint.mutual_information(&["A"], &["C"], &["B"]).unwrap() < 1e-12);
        let h = joint.entropy(&["A", "B", "C"]).unwrap();
        prop_assert!(h <= (18f64).ln() + 1e-12);
    }
}
