//! Checkpoints: a config line followed by one named tensor per line.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::Deserialize;

use super::{EncoderConfig, EncoderError, Model, Params};
use crate::graphs::fmt_f64;
use crate::numerics::Tensor;

#[derive(Deserialize)]
struct ConfigLine {
    config: EncoderConfig,
}

#[derive(Deserialize)]
struct TensorLine {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub fn write_checkpoint(model: &Model, mut out: impl Write) -> Result<(), EncoderError> {
    let header = serde_json::json!({ "config": model.config });
    writeln!(out, "{header}")?;
    for (name, t) in model.params.iter() {
        let mut line = String::with_capacity(32 + 25 * t.len());
        let name_json = serde_json::to_string(name).expect("string serializes");
        let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        write!(
            line,
            "{{\"name\":{name_json},\"shape\":[{}],\"values\":[",
            shape.join(",")
        )
        .unwrap();
        for (i, &v) in t.data().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f64(v));
        }
        line.push_str("]}");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<(), EncoderError> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_checkpoint(input: impl Read) -> Result<Model, EncoderError> {
    let mut config = None;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| EncoderError::Checkpoint {
            line: i + 1,
            message,
        };
        if config.is_none() {
            let c: ConfigLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            config = Some(c.config);
            continue;
        }
        let t: TensorLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let tensor = Tensor::new(t.shape, t.values).map_err(|e| bad(e.to_string()))?;
        entries.push((t.name, tensor));
    }
    let config = config.ok_or(EncoderError::Checkpoint {
        line: 0,
        message: "empty checkpoint".into(),
    })?;
    Model::from_parts(config, Params::from_named(entries))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model, EncoderError> {
    read_checkpoint(fs::File::open(path)?)
}
