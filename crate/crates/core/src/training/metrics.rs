use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::graphs::Split;

use super::{Mode, TrainConfig};

pub const CSV_HEADER: &str =
    "epoch,split,mode,seed,accuracy,loss_lg,loss_lc,loss_ld,loss_la,cosine_sim,fallbacks";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: Split,
    pub mode: Mode,
    pub seed: u64,
    pub accuracy: f64,
    pub loss_lg: f64,
    pub loss_lc: f64,
    pub loss_ld: f64,
    pub loss_la: f64,
    pub cosine_sim: f64,
    pub fallbacks: usize,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.split,
            self.mode,
            self.seed,
            self.accuracy,
            self.loss_lg,
            self.loss_lc,
            self.loss_ld,
            self.loss_la,
            self.cosine_sim,
            self.fallbacks
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    writeln!(s, "{CSV_HEADER}").unwrap();
    for r in rows {
        writeln!(s, "{}", r.csv_line()).unwrap();
    }
    s
}

pub fn write_metrics_csv(rows: &[MetricsRow], mut out: impl Write) -> std::io::Result<()> {
    out.write_all(metrics_csv(rows).as_bytes())
}

/// What a finished run reports about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub corpus_hash: String,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
    pub test_per_class_accuracy: Vec<f64>,
    pub skipped_graphs: usize,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub expert_epsilon: f64,
    pub expert_gammas: Vec<f64>,
}
