use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{default_types, sample_plans, Batch, EncoderConfig, InterventionType, Model};
use crate::expert::{ExpertModel, ExpertTargets};
use crate::graphs::{GraphSample, Split};
use crate::numerics::{cosine_similarity, Tape};

use super::losses::{forward_batch, BatchOutput, BatchTargets};
use super::{Adam, Alternation, MetricsRow, Mode, TrainConfig, TrainError};

const SHUFFLE_STREAM: u64 = 1;
const INTERVENTION_STREAM: u64 = 2;
const EVALUATION_STREAM: u64 = 3;

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Graph-weighted means over a split or an epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitMetrics {
    pub graphs: usize,
    pub accuracy: f64,
    pub lg: f64,
    pub lc: f64,
    pub ld: f64,
    pub la: f64,
    pub cosine: f64,
    pub fallbacks: usize,
}

impl SplitMetrics {
    fn accumulate(&mut self, out: &BatchOutput) {
        let w = out.graphs as f64;
        self.graphs += out.graphs;
        self.accuracy += out.correct as f64;
        self.lg += w * out.lg;
        self.lc += w * out.lc;
        self.ld += w * out.ld;
        self.la += w * out.la;
        self.cosine += out.cosine_sum;
        self.fallbacks += out.fallbacks;
    }

    fn finish(mut self) -> Self {
        let n = self.graphs.max(1) as f64;
        for v in [
            &mut self.accuracy,
            &mut self.lg,
            &mut self.lc,
            &mut self.ld,
            &mut self.la,
            &mut self.cosine,
        ] {
            *v /= n;
        }
        self
    }

    fn row(&self, epoch: usize, split: Split, mode: Mode, seed: u64) -> MetricsRow {
        MetricsRow {
            epoch,
            split,
            mode,
            seed,
            accuracy: self.accuracy,
            loss_lg: self.lg,
            loss_lc: self.lc,
            loss_ld: self.ld,
            loss_la: self.la,
            cosine_sim: self.cosine,
            fallbacks: self.fallbacks,
        }
    }
}

/// Every loss and diagnostic over `graphs`, without updating anything.
/// Intervention plans come from a generator reseeded on every call, so the
/// result depends only on the parameters.
pub fn evaluate_split(
    model: &Model,
    graphs: &[&GraphSample],
    targets: &[&ExpertTargets],
    config: &TrainConfig,
) -> Result<SplitMetrics, TrainError> {
    let types = &default_types()[..config.k_types];
    let mut rng = stream(config.seed, EVALUATION_STREAM);
    let mut acc = SplitMetrics::default();
    for (gs, ts) in graphs
        .chunks(config.batch_size)
        .zip(targets.chunks(config.batch_size))
    {
        let batch = Batch::new(gs)?;
        let plans = sample_plans(&batch, types, &mut rng);
        let bt = BatchTargets::new(ts, config.k_types);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let (out, _) = forward_batch(
            model,
            &mut tape,
            &bound,
            &batch,
            &bt,
            &plans,
            config.mode,
            config.lambda,
            config.aux_weight,
        )?;
        acc.accumulate(&out);
    }
    Ok(acc.finish())
}

/// Label accuracy from `f^E` and `f^H` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub per_class_count: Vec<usize>,
}

pub fn evaluate(
    model: &Model,
    graphs: &[&GraphSample],
    batch_size: usize,
) -> Result<Evaluation, TrainError> {
    let classes = model.config.num_label_classes;
    let mut hits = vec![0usize; classes];
    let mut counts = vec![0usize; classes];
    for chunk in graphs.chunks(batch_size.max(1)) {
        let batch = Batch::new(chunk)?;
        for (pred, g) in model.predict(&batch)?.into_iter().zip(chunk) {
            counts[g.label] += 1;
            if pred == g.label {
                hits[g.label] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    Ok(Evaluation {
        accuracy: hits.iter().sum::<usize>() as f64 / total.max(1) as f64,
        per_class_accuracy: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &c)| if c == 0 { 0.0 } else { h as f64 / c as f64 })
            .collect(),
        per_class_count: counts,
    })
}

/// Mean cosine similarity between `r^P` and `f^P` over `graphs`.
pub fn expert_similarity(
    model: &Model,
    graphs: &[&GraphSample],
    targets: &[&ExpertTargets],
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for (g, t) in graphs.iter().zip(targets) {
        let reps = model.encode(g)?;
        let p = model.project_embodiment(&reps, &g.embodiment_nodes)?;
        total += cosine_similarity(t.projected.as_slice(), p.as_slice())?;
    }
    Ok(total / graphs.len().max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch.
    pub model: Model,
    pub history: Vec<MetricsRow>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
    pub test_evaluation: Evaluation,
    pub skipped: usize,
}

struct SplitData<'a> {
    graphs: Vec<&'a GraphSample>,
    targets: Vec<ExpertTargets>,
}

impl SplitData<'_> {
    fn target_refs(&self) -> Vec<&ExpertTargets> {
        self.targets.iter().collect()
    }
}

fn prepare<'a>(
    corpus: &'a [GraphSample],
    split: Split,
    expert: &ExpertModel,
    skipped: &mut usize,
) -> Result<SplitData<'a>, TrainError> {
    let mut graphs = Vec::new();
    let mut targets = Vec::new();
    for g in corpus.iter().filter(|g| g.split == split) {
        if g.embodiment_nodes.is_empty() {
            *skipped += 1;
            log::warn!("graph {} has no embodiment; skipped", g.id);
            continue;
        }
        match expert.targets(g) {
            Ok(t) => {
                graphs.push(g);
                targets.push(t);
            }
            Err(e) => {
                *skipped += 1;
                log::warn!("graph {}: {e}; skipped", g.id);
            }
        }
    }
    if graphs.is_empty() {
        return Err(TrainError::EmptySplit(split));
    }
    Ok(SplitData { graphs, targets })
}

fn steps_on_la(config: &TrainConfig, epoch: usize, batch_index: usize) -> bool {
    config.mode.steps_la()
        && match config.alternation {
            Alternation::PerBatch => batch_index % 2 == 1,
            Alternation::PerEpoch => epoch.is_multiple_of(2),
            Alternation::Off => false,
        }
}

/// Trains one model; returns the best-validation checkpoint and the history.
pub fn train(
    corpus: &[GraphSample],
    encoder: &EncoderConfig,
    expert: &ExpertModel,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    encoder.validate()?;
    if expert.weights.num_types() < config.k_types {
        return Err(TrainError::Config(format!(
            "expert defines {} intervention types, {} requested",
            expert.weights.num_types(),
            config.k_types
        )));
    }
    let mut skipped = 0;
    let train_data = prepare(corpus, Split::Train, expert, &mut skipped)?;
    let val_data = prepare(corpus, Split::Val, expert, &mut skipped)?;
    let test_data = prepare(corpus, Split::Test, expert, &mut skipped)?;
    let (val_targets, test_targets) = (val_data.target_refs(), test_data.target_refs());

    let types: Vec<InterventionType> = default_types()[..config.k_types].to_vec();
    let mut model = Model::new(encoder.clone(), config.seed)?;
    let mut adam = Adam::new(&model.params, config.learning_rate);
    let mut shuffle_rng = stream(config.seed, SHUFFLE_STREAM);
    let mut intervention_rng = stream(config.seed, INTERVENTION_STREAM);

    let mut order: Vec<usize> = (0..train_data.graphs.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, f64, Model)> = None;
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut shuffle_rng);
        let mut epoch_metrics = SplitMetrics::default();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let graphs: Vec<&GraphSample> = chunk.iter().map(|&i| train_data.graphs[i]).collect();
            let targets: Vec<&ExpertTargets> =
                chunk.iter().map(|&i| &train_data.targets[i]).collect();
            let batch = Batch::new(&graphs)?;
            let plans = sample_plans(&batch, &types, &mut intervention_rng);
            let bt = BatchTargets::new(&targets, config.k_types);
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let (out, objectives) = forward_batch(
                &model,
                &mut tape,
                &bound,
                &batch,
                &bt,
                &plans,
                config.mode,
                config.lambda,
                config.aux_weight,
            )?;
            let objective = if steps_on_la(config, epoch, b) {
                objectives.la
            } else {
                objectives.lg
            };
            let grads = tape.backward(objective)?;
            let refs: Vec<_> = bound.vars.iter().map(|&v| grads.try_get(v)).collect();
            adam.step(&mut model.params, &refs);
            epoch_metrics.accumulate(&out);
        }
        let train_m = epoch_metrics.finish();
        let val_m = evaluate_split(&model, &val_data.graphs, &val_targets, config)?;
        let test_m = evaluate_split(&model, &test_data.graphs, &test_targets, config)?;
        for (m, split) in [
            (&train_m, Split::Train),
            (&val_m, Split::Val),
            (&test_m, Split::Test),
        ] {
            history.push(m.row(epoch, split, config.mode, config.seed));
        }
        log::debug!(
            "{} seed {} epoch {epoch}: train acc {:.4} la {:.4} | val acc {:.4} | test acc {:.4}",
            config.mode,
            config.seed,
            train_m.accuracy,
            train_m.la,
            val_m.accuracy,
            test_m.accuracy
        );
        if best.as_ref().is_none_or(|b| val_m.accuracy > b.1) {
            best = Some((epoch, val_m.accuracy, test_m.accuracy, model.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch >= config.min_epochs && epoch - best_epoch >= config.patience {
            break;
        }
    }
    let (best_epoch, best_val_accuracy, test_accuracy, best_model) =
        best.expect("at least one epoch runs");
    let test_evaluation = evaluate(&best_model, &test_data.graphs, config.batch_size)?;
    log::info!(
        "{} seed {}: best epoch {best_epoch} of {epochs_run}, val {best_val_accuracy:.4}, test {test_accuracy:.4}",
        config.mode,
        config.seed
    );
    Ok(TrainOutcome {
        model: best_model,
        history,
        best_epoch,
        epochs_run,
        best_val_accuracy,
        test_accuracy,
        test_evaluation,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{generate_dataset, DatasetSpec};

    fn small_corpus() -> Vec<GraphSample> {
        generate_dataset(&DatasetSpec {
            count: 120,
            seed: 9,
            ..DatasetSpec::default()
        })
        .unwrap()
    }

    fn quick(mode: Mode) -> TrainConfig {
        TrainConfig {
            mode,
            min_epochs: 3,
            max_epochs: 3,
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    fn small_encoder() -> EncoderConfig {
        EncoderConfig {
            widths: vec![4, 8, 8, 8],
            projection_hidden: 8,
            ..EncoderConfig::default()
        }
    }

    fn run(mode: Mode) -> TrainOutcome {
        train(
            &small_corpus(),
            &small_encoder(),
            &ExpertModel::default(),
            &quick(mode),
        )
        .unwrap()
    }

    #[test]
    fn same_seed_same_history() {
        let a = run(Mode::Clgl);
        let b = run(Mode::Clgl);
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn history_has_three_rows_per_epoch_and_valid_values() {
        for mode in Mode::ALL {
            let out = run(mode);
            assert_eq!(out.history.len(), 3 * out.epochs_run);
            for r in &out.history {
                assert!((0.0..=1.0).contains(&r.accuracy));
                for l in [r.loss_lg, r.loss_lc, r.loss_ld, r.loss_la] {
                    assert!(l >= 0.0 && l.is_finite(), "{r:?}");
                }
                assert_eq!(r.mode, mode);
            }
        }
    }

    #[test]
    fn erm_equals_clgl_without_alternation() {
        let erm = run(Mode::Erm);
        let config = TrainConfig {
            alternation: Alternation::Off,
            ..quick(Mode::Clgl)
        };
        let off = train(
            &small_corpus(),
            &small_encoder(),
            &ExpertModel::default(),
            &config,
        )
        .unwrap();
        assert_eq!(erm.model.params, off.model.params);
        for (a, b) in erm.history.iter().zip(&off.history) {
            assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
            assert_eq!(a.loss_lg.to_bits(), b.loss_lg.to_bits());
            assert_eq!(a.loss_la.to_bits(), b.loss_la.to_bits());
        }
    }

    #[test]
    fn erm_never_touches_projection_head() {
        let out = run(Mode::Erm);
        let init = Model::new(small_encoder(), 0).unwrap();
        for name in ["proj.w1", "proj.b1", "proj.w2", "proj.b2", "aux.w", "aux.b"] {
            assert_eq!(out.model.params.get(name), init.params.get(name), "{name}");
        }
        assert_ne!(out.model.params.get("head.w"), init.params.get("head.w"));
        assert!(out.history.iter().all(|r| r.loss_la > 0.0));
    }

    #[test]
    fn diagnostics_do_not_change_parameters() {
        let corpus = small_corpus();
        let model = Model::new(small_encoder(), 1).unwrap();
        let before = model.params.fingerprint();
        let graphs: Vec<&GraphSample> = corpus.iter().collect();
        let targets: Vec<ExpertTargets> = corpus
            .iter()
            .map(|g| ExpertModel::default().targets(g).unwrap())
            .collect();
        let trefs: Vec<&ExpertTargets> = targets.iter().collect();
        evaluate_split(&model, &graphs, &trefs, &quick(Mode::Erm)).unwrap();
        assert_eq!(model.params.fingerprint(), before);
        let a = evaluate_split(&model, &graphs, &trefs, &quick(Mode::Erm)).unwrap();
        let b = evaluate_split(&model, &graphs, &trefs, &quick(Mode::Erm)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_split_rejected() {
        let corpus: Vec<GraphSample> = small_corpus()
            .into_iter()
            .filter(|g| g.split != Split::Val)
            .collect();
        let err = train(
            &corpus,
            &small_encoder(),
            &ExpertModel::default(),
            &quick(Mode::Erm),
        );
        assert!(matches!(err, Err(TrainError::EmptySplit(Split::Val))));
    }

    #[test]
    fn invalid_configs_rejected() {
        for config in [
            TrainConfig {
                lambda: -1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                min_epochs: 10,
                max_epochs: 5,
                ..TrainConfig::default()
            },
            TrainConfig {
                k_types: 4,
                ..TrainConfig::default()
            },
        ] {
            assert!(config.validate().is_err());
        }
    }

    #[test]
    fn evaluate_bounds() {
        let corpus = small_corpus();
        let graphs: Vec<&GraphSample> = corpus.iter().collect();
        let mut model = Model::new(small_encoder(), 0).unwrap();
        let eval = evaluate(&model, &graphs, 32).unwrap();
        assert!((0.0..=1.0).contains(&eval.accuracy));
        assert_eq!(eval.per_class_count.iter().sum::<usize>(), corpus.len());
        // a head that always says class 0 scores the class-0 share
        model.params.get_mut("head.w").unwrap().data_mut().fill(0.0);
        model.params.get_mut("head.b").unwrap().data_mut()[0] = 1.0;
        let eval = evaluate(&model, &graphs, 32).unwrap();
        assert_eq!(eval.per_class_accuracy, vec![1.0, 0.0, 0.0]);
        let share = eval.per_class_count[0] as f64 / corpus.len() as f64;
        assert!((eval.accuracy - share).abs() < 1e-15);
    }
}
