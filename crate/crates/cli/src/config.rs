//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! errors. Command-line flags are applied on top of the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clgl_core::encoder::{EncoderConfig, LayerKind};
use clgl_core::expert::{ExpertModel, InterventionWeights};
use clgl_core::graphs::{DatasetSpec, Family};
use clgl_core::training::{Alternation, Mode, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub expert: ExpertModel,
    pub out: PathBuf,
    pub corpus: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            expert: ExpertModel::default(),
            out: PathBuf::from("out"),
            corpus: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "family",
    "count",
    "bias",
    "ood_test",
    "seed",
    "split_train",
    "split_val",
    "split_test",
    "widths",
    "layer",
    "m",
    "projection_hidden",
    "degree_normalize",
    "mode",
    "lambda",
    "k_types",
    "learning_rate",
    "batch_size",
    "epochs_min",
    "epochs_max",
    "patience",
    "alternation",
    "aux_weight",
    "epsilon",
    "gammas",
    "out",
    "corpus",
];

fn invalid(key: &str, value: &str) -> CliError {
    CliError::Validation(format!("invalid value {value:?} for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| invalid(key, value))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "family" => {
                self.dataset.family = Family::parse(value).ok_or_else(|| invalid(key, value))?
            }
            "count" => self.dataset.count = num(key, value)?,
            "bias" => self.dataset.bias = num(key, value)?,
            "ood_test" => self.dataset.ood_test = num(key, value)?,
            "seed" => {
                let seed = num(key, value)?;
                self.dataset.seed = seed;
                self.train.seed = seed;
            }
            "split_train" => self.dataset.fractions.train = num(key, value)?,
            "split_val" => self.dataset.fractions.val = num(key, value)?,
            "split_test" => self.dataset.fractions.test = num(key, value)?,
            "widths" => self.encoder.widths = list(key, value)?,
            "layer" => {
                self.encoder.kind = LayerKind::parse(value).ok_or_else(|| invalid(key, value))?
            }
            "m" => self.encoder.m = num(key, value)?,
            "projection_hidden" => self.encoder.projection_hidden = num(key, value)?,
            "degree_normalize" => self.encoder.degree_normalize = num(key, value)?,
            "mode" => self.train.mode = Mode::parse(value).ok_or_else(|| invalid(key, value))?,
            "lambda" => self.train.lambda = num(key, value)?,
            "k_types" => self.train.k_types = num(key, value)?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "epochs_min" => self.train.min_epochs = num(key, value)?,
            "epochs_max" => self.train.max_epochs = num(key, value)?,
            "patience" => self.train.patience = num(key, value)?,
            "alternation" => {
                self.train.alternation =
                    Alternation::parse(value).ok_or_else(|| invalid(key, value))?
            }
            "aux_weight" => self.train.aux_weight = num(key, value)?,
            "epsilon" => self.expert.epsilon = num(key, value)?,
            "gammas" => {
                self.expert.weights = InterventionWeights {
                    gammas: list(key, value)?,
                }
            }
            "out" => self.out = PathBuf::from(value),
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            _ => return Err(CliError::Validation(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let d = &self.dataset;
        let e = &self.encoder;
        let t = &self.train;
        Some(match key {
            "family" => d.family.as_str().to_string(),
            "count" => d.count.to_string(),
            "bias" => d.bias.to_string(),
            "ood_test" => d.ood_test.to_string(),
            "seed" => t.seed.to_string(),
            "split_train" => d.fractions.train.to_string(),
            "split_val" => d.fractions.val.to_string(),
            "split_test" => d.fractions.test.to_string(),
            "widths" => join(&e.widths),
            "layer" => e.kind.as_str().to_string(),
            "m" => e.m.to_string(),
            "projection_hidden" => e.projection_hidden.to_string(),
            "degree_normalize" => e.degree_normalize.to_string(),
            "mode" => t.mode.to_string(),
            "lambda" => t.lambda.to_string(),
            "k_types" => t.k_types.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "epochs_min" => t.min_epochs.to_string(),
            "epochs_max" => t.max_epochs.to_string(),
            "patience" => t.patience.to_string(),
            "alternation" => t.alternation.as_str().to_string(),
            "aux_weight" => t.aux_weight.to_string(),
            "epsilon" => self.expert.epsilon.to_string(),
            "gammas" => join(&self.expert.weights.gammas),
            "out" => self.out.display().to_string(),
            "corpus" => self.corpus.as_ref()?.display().to_string(),
            _ => return None,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("line {}: expected key = value", n + 1))
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The fully resolved configuration, one key per line, re-parseable.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            if let Some(v) = self.get(key) {
                writeln!(s, "{key} = {v}").unwrap();
            }
        }
        s
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |e: String| Err(CliError::Validation(e));
        if let Err(e) = self.dataset.validate() {
            return fail(e.to_string());
        }
        if let Err(e) = self.encoder.validate() {
            return fail(e.to_string());
        }
        if let Err(e) = self.train.validate() {
            return fail(e.to_string());
        }
        if !(0.0..=1.0).contains(&self.expert.epsilon) {
            return fail(format!("epsilon {} outside [0, 1]", self.expert.epsilon));
        }
        if self
            .expert
            .weights
            .gammas
            .iter()
            .any(|g| !(g.is_finite() && *g > 0.0))
        {
            return fail("gammas must be positive".into());
        }
        if self.expert.weights.num_types() < self.train.k_types {
            return fail(format!(
                "k_types = {} but only {} gammas are configured",
                self.train.k_types,
                self.expert.weights.num_types()
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn every_key_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("corpus", "data/c").unwrap();
        cfg.set("widths", "4, 16,16").unwrap();
        cfg.set("mode", "clgl-d").unwrap();
        cfg.set("gammas", "1,0.5").unwrap();
        cfg.set("k_types", "2").unwrap();
        cfg.set("alternation", "per-epoch").unwrap();
        cfg.set("seed", "9").unwrap();
        let text = cfg.to_text();
        assert_eq!(text.lines().count(), KEYS.len());
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.encoder.widths, vec![4, 16, 16]);
        assert_eq!(back.train.mode, Mode::ClglD);
        assert_eq!(back.dataset.seed, 9);
        back.validate().unwrap();
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = RunConfig::parse("# desk run\n\n  bias = 0.9\nood_test=true\n").unwrap();
        assert_eq!(cfg.dataset.bias, 0.9);
        assert!(cfg.dataset.ood_test);
    }

    #[test]
    fn unknown_and_malformed_rejected() {
        assert!(matches!(
            RunConfig::parse("biass = 0.5"),
            Err(CliError::Validation(_))
        ));
        assert!(RunConfig::parse("bias 0.5").is_err());
        assert!(RunConfig::parse("count = many").is_err());
        assert!(RunConfig::parse("mode = SGD").is_err());
    }

    #[test]
    fn validation_catches_inconsistency() {
        let mut cfg = RunConfig::default();
        cfg.set("gammas", "1").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("bias", "0.1").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("m", "7").unwrap();
        assert!(cfg.validate().is_err());
    }
}
