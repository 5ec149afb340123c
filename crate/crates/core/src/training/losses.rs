use crate::encoder::{Batch, Bound, InterventionPlan, Model};
use crate::expert::ExpertTargets;
use crate::graphs::GraphSample;
use crate::numerics::{argmax, cosine_similarity, softmax_in_place, Tape, Tensor, Var};

use super::{Mode, TrainError};

/// Expert targets for one batch as constant matrices.
#[derive(Debug, Clone)]
pub struct BatchTargets {
    pub projected: Tensor,
    /// One matrix per intervention type.
    pub intervened: Vec<Tensor>,
    /// `argmax r^P`, the CLGL-D auxiliary labels.
    pub expert_labels: Vec<usize>,
}

impl BatchTargets {
    pub fn new(targets: &[&ExpertTargets], k_types: usize) -> Self {
        let rows = |f: &dyn Fn(&ExpertTargets) -> Vec<f64>| {
            let data: Vec<Vec<f64>> = targets.iter().map(|t| f(t)).collect();
            Tensor::from_rows(&data).expect("targets share a width")
        };
        Self {
            projected: rows(&|t| t.projected.as_slice().to_vec()),
            intervened: (0..k_types)
                .map(|j| rows(&|t| t.intervened[j].as_slice().to_vec()))
                .collect(),
            expert_labels: targets.iter().map(|t| t.projected.argmax()).collect(),
        }
    }
}

/// The two objectives a step can differentiate.
#[derive(Debug, Clone, Copy)]
pub struct Objectives {
    pub lg: Var,
    pub la: Var,
}

/// Scalar readings of one forward pass over a batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutput {
    pub graphs: usize,
    pub correct: usize,
    pub lg: f64,
    pub lc: f64,
    pub ld: f64,
    pub la: f64,
    pub cosine_sum: f64,
    pub fallbacks: usize,
    pub predictions: Vec<usize>,
}

/// One forward pass computing every loss, whatever the mode steps on.
///
/// `plans[j][g]` is graph `g`'s plan for type `j + 1`.
#[allow(clippy::too_many_arguments)]
pub fn forward_batch(
    model: &Model,
    tape: &mut Tape,
    bound: &Bound,
    batch: &Batch,
    targets: &BatchTargets,
    plans: &[Vec<InterventionPlan>],
    mode: Mode,
    lambda: f64,
    aux_weight: f64,
) -> Result<(BatchOutput, Objectives), TrainError> {
    let layers = model.encode_vars(tape, bound, batch)?;
    let pooled = model.pool_vars(tape, *layers.last().unwrap(), batch)?;
    let logits = model.classify_vars(tape, bound, pooled)?;
    let mut lg = tape.cross_entropy_rows(logits, batch.labels.clone())?;
    if mode == Mode::ClglD {
        let aux = model.aux_vars(tape, bound, pooled)?;
        let aux_ce = tape.cross_entropy_rows(aux, targets.expert_labels.clone())?;
        let aux_ce = tape.scale(aux_ce, aux_weight)?;
        lg = tape.add(lg, aux_ce)?;
    }

    let tap = layers[model.config.m];
    let proj = model.project_vars(tape, bound, tap, batch)?;
    let proj_log = tape.log_softmax_rows(proj)?;
    let lc = tape.kl_rows(proj_log, targets.projected.clone())?;

    let mut ld: Option<Var> = None;
    let mut fallbacks = 0;
    for (type_plans, target) in plans.iter().zip(&targets.intervened) {
        fallbacks += type_plans.iter().filter(|p| p.fallback).count();
        let inter = model.intervene_vars(tape, bound, tap, batch, type_plans)?;
        let inter_log = tape.log_softmax_rows(inter)?;
        let term = tape.kl_rows(inter_log, target.clone())?;
        ld = Some(match ld {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let ld = match ld {
        Some(v) => v,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    let la = if mode == Mode::ClglA {
        lc
    } else {
        let scaled = tape.scale(ld, lambda)?;
        tape.add(lc, scaled)?
    };

    let g = batch.num_graphs();
    let logit_values = tape.value(logits);
    let predictions: Vec<usize> = (0..g).map(|r| argmax(logit_values.row(r))).collect();
    let correct = predictions
        .iter()
        .zip(&batch.labels)
        .filter(|(p, y)| p == y)
        .count();
    let proj_values = tape.value(proj);
    let mut cosine_sum = 0.0;
    for r in 0..g {
        let mut probs = proj_values.row(r).to_vec();
        softmax_in_place(&mut probs);
        cosine_sum += cosine_similarity(targets.projected.row(r), &probs)?;
    }
    let scalar = |v: Var| tape.value(v).data()[0];
    let output = BatchOutput {
        graphs: g,
        correct,
        lg: scalar(lg),
        lc: scalar(lc),
        ld: scalar(ld),
        la: scalar(la),
        cosine_sum,
        fallbacks,
        predictions,
    };
    Ok((output, Objectives { lg, la }))
}

fn single_pass(
    model: &Model,
    graphs: &[&GraphSample],
    targets: &[&ExpertTargets],
    plans: &[Vec<InterventionPlan>],
    mode: Mode,
) -> Result<BatchOutput, TrainError> {
    let batch = Batch::new(graphs)?;
    let batch_targets = BatchTargets::new(targets, plans.len());
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let (out, _) = forward_batch(
        model,
        &mut tape,
        &bound,
        &batch,
        &batch_targets,
        plans,
        mode,
        1.0,
        1.0,
    )?;
    Ok(out)
}

/// Mean `KL(r^P ‖ f^P)` over a batch.
pub fn loss_lc(
    model: &Model,
    graphs: &[&GraphSample],
    targets: &[&ExpertTargets],
) -> Result<f64, TrainError> {
    Ok(single_pass(model, graphs, targets, &[], Mode::Clgl)?.lc)
}

/// `Σ_j` mean `KL(r^I_j ‖ f^I_j)`; `plans[j][g]` as in [`forward_batch`].
pub fn loss_ld(
    model: &Model,
    graphs: &[&GraphSample],
    targets: &[&ExpertTargets],
    plans: &[Vec<InterventionPlan>],
) -> Result<f64, TrainError> {
    Ok(single_pass(model, graphs, targets, plans, Mode::Clgl)?.ld)
}

/// Mean label cross-entropy, plus the auxiliary term in CLGL-D mode.
pub fn loss_lg(
    model: &Model,
    graphs: &[&GraphSample],
    targets: &[&ExpertTargets],
    mode: Mode,
) -> Result<f64, TrainError> {
    Ok(single_pass(model, graphs, targets, &[], mode)?.lg)
}

pub fn loss_la(lc: f64, ld: f64, lambda: f64) -> f64 {
    lc + lambda * ld
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{default_types, sample_plans, EncoderConfig, ReplacementSource};
    use crate::expert::ExpertModel;
    use crate::graphs::{generate_dataset, DatasetSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(count: usize) -> (Vec<GraphSample>, Vec<ExpertTargets>) {
        let graphs = generate_dataset(&DatasetSpec {
            count,
            seed: 3,
            ..DatasetSpec::default()
        })
        .unwrap();
        let targets = graphs
            .iter()
            .map(|g| ExpertModel::default().targets(g).unwrap())
            .collect();
        (graphs, targets)
    }

    fn zero_projection(model: &mut Model) {
        for name in ["proj.w1", "proj.b1", "proj.w2", "proj.b2"] {
            model.params.get_mut(name).unwrap().data_mut().fill(0.0);
        }
    }

    #[test]
    fn lc_uniform_prediction_closed_form() {
        let (graphs, targets) = setup(40);
        let i = targets
            .iter()
            .position(|t| t.projected.argmax() == 2)
            .expect("a cyclic-low graph");
        let mut model = Model::new(EncoderConfig::default(), 0).unwrap();
        zero_projection(&mut model);
        let lc = loss_lc(&model, &[&graphs[i]], &[&targets[i]]).unwrap();
        let p = [0.0125f64, 0.0125, 0.9625, 0.0125];
        let closed: f64 = p.iter().map(|v| v * (v / 0.25).ln()).sum();
        assert!((lc - closed).abs() < 1e-12);
        assert!((lc - 1.18518).abs() < 1e-5);
        let twice = loss_lc(
            &model,
            &[&graphs[i], &graphs[i]],
            &[&targets[i], &targets[i]],
        )
        .unwrap();
        assert!((twice - lc).abs() < 1e-15);
    }

    #[test]
    fn lc_zero_when_prediction_matches_target() {
        let (graphs, targets) = setup(40);
        let mut model = Model::new(EncoderConfig::default(), 0).unwrap();
        zero_projection(&mut model);
        // bias alone reproduces the target: logits = ln p
        let i = 0;
        let b2 = model.params.get_mut("proj.b2").unwrap();
        for (b, p) in b2
            .data_mut()
            .iter_mut()
            .zip(targets[i].projected.as_slice())
        {
            *b = p.ln();
        }
        let lc = loss_lc(&model, &[&graphs[i]], &[&targets[i]]).unwrap();
        assert!(lc.abs() < 1e-15);
    }

    #[test]
    fn ld_degenerate_and_linear() {
        let (graphs, targets) = setup(16);
        let refs: Vec<&GraphSample> = graphs.iter().collect();
        let trefs: Vec<&ExpertTargets> = targets.iter().collect();
        let model = Model::new(EncoderConfig::default(), 2).unwrap();
        let empty: Vec<InterventionPlan> = (0..refs.len())
            .map(|_| InterventionPlan::empty(1, ReplacementSource::SameGraph))
            .collect();
        // gamma_1 = 1 keeps r^P; rho = 0 keeps f^P
        let ld = loss_ld(&model, &refs, &trefs, &[empty]).unwrap();
        let lc = loss_lc(&model, &refs, &trefs).unwrap();
        assert!((ld - lc).abs() < 1e-12);

        let batch = Batch::new(&refs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plans = sample_plans(&batch, &default_types()[1..2], &mut rng);
        let single = loss_ld(&model, &refs, &trefs, &plans).unwrap();
        let doubled_plans = vec![plans[0].clone(), plans[0].clone()];
        let doubled_targets: Vec<ExpertTargets> = targets
            .iter()
            .map(|t| ExpertTargets {
                intervened: vec![t.intervened[1].clone(), t.intervened[1].clone()],
                ..t.clone()
            })
            .collect();
        let drefs: Vec<&ExpertTargets> = doubled_targets.iter().collect();
        let shifted: Vec<ExpertTargets> = targets
            .iter()
            .map(|t| ExpertTargets {
                intervened: vec![t.intervened[1].clone()],
                ..t.clone()
            })
            .collect();
        let srefs: Vec<&ExpertTargets> = shifted.iter().collect();
        let one = loss_ld(&model, &refs, &srefs, &plans).unwrap();
        let two = loss_ld(&model, &refs, &drefs, &doubled_plans).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-12);
        assert!(single >= 0.0);
    }

    #[test]
    fn la_arithmetic() {
        assert_eq!(loss_la(0.3, 0.5, 0.0), 0.3);
        assert!((loss_la(0.3, 0.5, 1.0) - 0.8).abs() < 1e-15);
        assert!((loss_la(0.3, 0.5, 1.5) - (0.3 + 0.75)).abs() < 1e-15);
    }

    #[test]
    fn lg_uniform_and_peaked() {
        let (graphs, targets) = setup(8);
        let refs: Vec<&GraphSample> = graphs.iter().collect();
        let trefs: Vec<&ExpertTargets> = targets.iter().collect();
        let mut model = Model::new(EncoderConfig::default(), 0).unwrap();
        model.params.get_mut("head.w").unwrap().data_mut().fill(0.0);
        let lg = loss_lg(&model, &refs, &trefs, Mode::Erm).unwrap();
        assert!((lg - 3f64.ln()).abs() < 1e-12);

        // one graph, label pushed through the bias
        let g = &graphs[0];
        let b = model.params.get_mut("head.b").unwrap().data_mut();
        b.fill(-40.0);
        b[g.label] = 40.0;
        let lg = loss_lg(&model, &[g], &[&targets[0]], Mode::Erm).unwrap();
        assert!(lg < 1e-30);
        model.params.get_mut("aux.w").unwrap().data_mut().fill(0.0);
        let ab = model.params.get_mut("aux.b").unwrap().data_mut();
        ab.fill(-40.0);
        ab[targets[0].projected.argmax()] = 40.0;
        let total = loss_lg(&model, &[g], &[&targets[0]], Mode::ClglD).unwrap();
        assert!(total < 1e-30);
    }

    #[test]
    fn cosine_of_untrained_uniform_projection() {
        let (graphs, targets) = setup(40);
        let i = targets
            .iter()
            .position(|t| t.projected.argmax() == 2)
            .unwrap();
        let mut model = Model::new(EncoderConfig::default(), 0).unwrap();
        zero_projection(&mut model);
        let out = single_pass(&model, &[&graphs[i]], &[&targets[i]], &[], Mode::Clgl).unwrap();
        assert!((out.cosine_sum - 0.5192).abs() < 2e-4);
    }
}
