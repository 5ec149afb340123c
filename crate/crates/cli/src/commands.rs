//! One function per subcommand. Each reads and writes plain files so runs
//! can be compared and replayed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use clgl_core::causal::{check_coverage_gap, run_verification, CoverageReport, VerificationReport};
use clgl_core::encoder::{load_checkpoint, save_checkpoint};
use clgl_core::graphs::{
    corpus_hash, generate_dataset, load_corpus, save_corpus, DatasetSpec, GraphSample, Split,
    NUM_CLASSES,
};
use clgl_core::training::{evaluate, metrics_csv, train, Evaluation, Mode, RunSummary};

use crate::{CliError, RunConfig};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const VERIFICATION_FILE: &str = "verification.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TEXT: &str = "report.txt";

/// Calibration pair for the coverage check: a checkpoint whose `L_c` is at
/// most this many nats ...
pub const COVERAGE_LC: f64 = 0.02;
/// ... must keep the plug-in information gap below this.
pub const COVERAGE_GAP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: DatasetSpec,
    pub count: usize,
    pub seed: u64,
    pub corpus_hash: String,
    /// Graphs per label, keyed by split.
    pub class_counts: BTreeMap<String, Vec<usize>>,
    /// Fraction of graphs whose confounder class matches the motif class.
    pub realized_bias: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn describe(spec: &DatasetSpec, corpus: &[GraphSample]) -> Self {
        let mut class_counts = BTreeMap::new();
        let mut realized_bias = BTreeMap::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            let graphs: Vec<&GraphSample> = corpus.iter().filter(|g| g.split == split).collect();
            let mut counts = vec![0; NUM_CLASSES];
            for g in &graphs {
                counts[g.label] += 1;
            }
            let same = graphs
                .iter()
                .filter(|g| g.motif_class == g.confounder_class)
                .count();
            class_counts.insert(split.to_string(), counts);
            realized_bias.insert(split.to_string(), same as f64 / graphs.len().max(1) as f64);
        }
        Manifest {
            spec: spec.clone(),
            count: corpus.len(),
            seed: spec.seed,
            corpus_hash: corpus_hash(corpus),
            class_counts,
            realized_bias,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn prepare_dir(dir: &Path, marker: &str, force: bool) -> Result<(), CliError> {
    if dir.join(marker).exists() && !force {
        return Err(CliError::Validation(format!(
            "{} already exists; pass --force to overwrite",
            dir.join(marker).display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn load_manifest(dir: &Path) -> Result<Manifest, CliError> {
    Ok(serde_json::from_str(&read(&dir.join(MANIFEST_FILE))?)?)
}

/// Loads a corpus directory and checks it against its manifest.
pub fn load_checked_corpus(dir: &Path) -> Result<(Vec<GraphSample>, Manifest), CliError> {
    let manifest = load_manifest(dir)?;
    let path = dir.join(CORPUS_FILE);
    let corpus = load_corpus(&path)?;
    let hash = corpus_hash(&corpus);
    if hash != manifest.corpus_hash {
        return Err(CliError::Validation(format!(
            "{} hashes to {hash}, manifest records {}",
            path.display(),
            manifest.corpus_hash
        )));
    }
    Ok((corpus, manifest))
}

fn corpus_dir(config: &RunConfig) -> Result<&Path, CliError> {
    config
        .corpus
        .as_deref()
        .ok_or_else(|| CliError::Validation("no corpus given (--corpus or corpus = ...)".into()))
}

pub fn cmd_generate(config: &RunConfig, force: bool) -> Result<Manifest, CliError> {
    config.dataset.validate()?;
    let out = &config.out;
    prepare_dir(out, CORPUS_FILE, force)?;
    let corpus = generate_dataset(&config.dataset)?;
    save_corpus(&corpus, out.join(CORPUS_FILE))?;
    let manifest = Manifest::describe(&config.dataset, &corpus);
    write(
        &out.join(MANIFEST_FILE),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    write(&out.join(CONFIG_FILE), &config.to_text())?;
    log::info!(
        "wrote {} graphs to {} (hash {})",
        manifest.count,
        out.display(),
        manifest.corpus_hash
    );
    Ok(manifest)
}

pub fn cmd_train(config: &RunConfig, force: bool) -> Result<RunSummary, CliError> {
    config.validate()?;
    let (corpus, manifest) = load_checked_corpus(corpus_dir(config)?)?;
    let out = &config.out;
    prepare_dir(out, SUMMARY_FILE, force)?;
    log::info!("resolved config:\n{}", config.to_text());
    let outcome = train(&corpus, &config.encoder, &config.expert, &config.train)?;
    save_checkpoint(&outcome.model, out.join(CHECKPOINT_FILE))?;
    write(&out.join(METRICS_FILE), &metrics_csv(&outcome.history))?;
    let summary = RunSummary {
        mode: config.train.mode,
        seed: config.train.seed,
        corpus_hash: manifest.corpus_hash,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run,
        best_val_accuracy: outcome.best_val_accuracy,
        test_accuracy: outcome.test_accuracy,
        test_per_class_accuracy: outcome.test_evaluation.per_class_accuracy.clone(),
        skipped_graphs: outcome.skipped,
        encoder: config.encoder.clone(),
        train: config.train.clone(),
        expert_epsilon: config.expert.epsilon,
        expert_gammas: config.expert.weights.gammas.clone(),
    };
    write(
        &out.join(SUMMARY_FILE),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    write(&out.join(CONFIG_FILE), &config.to_text())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub run: PathBuf,
    pub split: Split,
    pub corpus_hash: String,
    pub evaluation: Evaluation,
    pub coverage: CoverageReport,
    /// Whether the calibration pair applies: `L_c` small on a covering corpus.
    pub coverage_applies: bool,
    pub coverage_holds: bool,
}

/// Scores a finished run on one split of its corpus and checks the
/// coverage gap on that split.
pub fn cmd_evaluate(
    config: &RunConfig,
    run: &Path,
    split: Split,
) -> Result<EvaluationReport, CliError> {
    let summary: RunSummary = serde_json::from_str(&read(&run.join(SUMMARY_FILE))?)?;
    let (corpus, manifest) = load_checked_corpus(corpus_dir(config)?)?;
    if manifest.corpus_hash != summary.corpus_hash {
        return Err(CliError::Validation(format!(
            "run was trained on corpus {}, not {}",
            summary.corpus_hash, manifest.corpus_hash
        )));
    }
    let model = load_checkpoint(run.join(CHECKPOINT_FILE))?;
    let graphs: Vec<GraphSample> = corpus
        .into_iter()
        .filter(|g| g.split == split && !g.embodiment_nodes.is_empty())
        .collect();
    if graphs.is_empty() {
        return Err(CliError::Validation(format!("the {split} split is empty")));
    }
    let refs: Vec<&GraphSample> = graphs.iter().collect();
    let evaluation = evaluate(&model, &refs, config.train.batch_size)?;
    let coverage = check_coverage_gap(&graphs, &model, &config.expert)?;
    let coverage_applies = coverage.covered() && coverage.loss_lc <= COVERAGE_LC;
    let report = EvaluationReport {
        run: run.to_path_buf(),
        split,
        corpus_hash: manifest.corpus_hash,
        coverage_holds: coverage.holds(COVERAGE_LC, COVERAGE_GAP),
        coverage_applies,
        evaluation,
        coverage,
    };
    write(
        &run.join(EVALUATION_FILE),
        &serde_json::to_string_pretty(&report)?,
    )?;
    if coverage_applies && !report.coverage_holds {
        return Err(CliError::Verification(format!(
            "L_c = {:.4} but the information gap is {:.4}",
            report.coverage.loss_lc, report.coverage.gap
        )));
    }
    Ok(report)
}

pub fn cmd_verify_theory(
    out: &Path,
    seed: u64,
    n_scms: usize,
) -> Result<VerificationReport, CliError> {
    let report = run_verification(seed, n_scms);
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write(
        &out.join(VERIFICATION_FILE),
        &serde_json::to_string_pretty(&report)?,
    )?;
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Verification(format!(
            "{} of {} checks failed: {}",
            failed.len(),
            report.checks.len(),
            failed.join(", ")
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub mode: Mode,
    pub runs: usize,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub mean_best_val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub corpus_hash: String,
    pub rows: Vec<ReportRow>,
    pub skipped: Vec<PathBuf>,
    /// Ordering assertions between modes, e.g. `("CLGL > ERM", true)`.
    pub orderings: Vec<(String, bool)>,
    pub text: String,
    pub csv: String,
}

/// Sample standard deviation; 0 for a single run.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn cmd_report(runs: &[PathBuf], out: Option<&Path>) -> Result<RunReport, CliError> {
    let mut summaries = Vec::new();
    let mut skipped = Vec::new();
    for run in runs {
        let path = run.join(SUMMARY_FILE);
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<RunSummary>(&s).map_err(|e| e.to_string()));
        match parsed {
            Ok(s) => summaries.push(s),
            Err(e) => {
                log::warn!("skipping {}: {e}", run.display());
                skipped.push(run.clone());
            }
        }
    }
    let Some(first) = summaries.first() else {
        return Err(CliError::Validation("no completed runs to report".into()));
    };
    let corpus_hash = first.corpus_hash.clone();
    if let Some(other) = summaries.iter().find(|s| s.corpus_hash != corpus_hash) {
        return Err(CliError::Validation(format!(
            "runs come from different corpora ({corpus_hash} and {})",
            other.corpus_hash
        )));
    }
    let mut rows = Vec::new();
    for mode in Mode::ALL {
        let of_mode: Vec<&RunSummary> = summaries.iter().filter(|s| s.mode == mode).collect();
        if of_mode.is_empty() {
            continue;
        }
        let test: Vec<f64> = of_mode.iter().map(|s| s.test_accuracy).collect();
        let val: Vec<f64> = of_mode.iter().map(|s| s.best_val_accuracy).collect();
        let (mean, std) = mean_std(&test);
        rows.push(ReportRow {
            mode,
            runs: of_mode.len(),
            mean_test_accuracy: mean,
            std_test_accuracy: std,
            mean_best_val_accuracy: mean_std(&val).0,
        });
    }
    let mean_of = |m: Mode| {
        rows.iter()
            .find(|r| r.mode == m)
            .map(|r| r.mean_test_accuracy)
    };
    let mut orderings = Vec::new();
    for (a, b, strict) in [
        (Mode::Clgl, Mode::Erm, true),
        (Mode::Clgl, Mode::ClglA, false),
        (Mode::ClglA, Mode::Erm, true),
    ] {
        if let (Some(x), Some(y)) = (mean_of(a), mean_of(b)) {
            let op = if strict { ">" } else { ">=" };
            orderings.push((format!("{a} {op} {b}"), if strict { x > y } else { x >= y }));
        }
    }

    let mut csv =
        String::from("mode,runs,mean_test_accuracy,std_test_accuracy,mean_best_val_accuracy\n");
    let mut text = format!(
        "corpus {corpus_hash}\n{:<8} {:>4} {:>16}\n",
        "mode", "runs", "test accuracy"
    );
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.mode, r.runs, r.mean_test_accuracy, r.std_test_accuracy, r.mean_best_val_accuracy
        )
        .unwrap();
        writeln!(
            text,
            "{:<8} {:>4} {:>8.2} ± {:<5.2}",
            r.mode.as_str(),
            r.runs,
            100.0 * r.mean_test_accuracy,
            100.0 * r.std_test_accuracy
        )
        .unwrap();
    }
    for (claim, holds) in &orderings {
        writeln!(text, "{claim}: {}", if *holds { "yes" } else { "NO" }).unwrap();
    }
    if !skipped.is_empty() {
        writeln!(text, "skipped {} incomplete run(s)", skipped.len()).unwrap();
    }
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        write(&out.join(REPORT_CSV), &csv)?;
        write(&out.join(REPORT_TEXT), &text)?;
    }
    Ok(RunReport {
        corpus_hash,
        rows,
        skipped,
        orderings,
        text,
        csv,
    })
}
