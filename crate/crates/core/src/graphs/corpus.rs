//! JSON-lines corpus files, one graph per line. Floats are written with 17
//! significant digits so that a load reproduces every bit.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{GraphError, GraphSample};

/// Formats a float with 17 significant digits.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn sample_line(g: &GraphSample) -> String {
    let mut s = String::with_capacity(64 + 80 * g.num_nodes);
    write!(
        s,
        "{{\"id\":{},\"num_nodes\":{},\"edges\":[",
        g.id, g.num_nodes
    )
    .unwrap();
    for (i, (u, v)) in g.edges.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "[{u},{v}]").unwrap();
    }
    s.push_str("],\"node_features\":[");
    for (i, row) in g.node_features.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        write!(s, "[{}]", cells.join(",")).unwrap();
    }
    write!(
        s,
        "],\"label\":{},\"motif_class\":{},\"confounder_class\":{},\"connection_node\":",
        g.label, g.motif_class, g.confounder_class
    )
    .unwrap();
    match g.connection_node {
        Some(c) => write!(s, "{c}").unwrap(),
        None => s.push_str("null"),
    }
    let emb: Vec<String> = g.embodiment_nodes.iter().map(usize::to_string).collect();
    write!(
        s,
        ",\"embodiment_nodes\":[{}],\"split\":\"{}\"}}",
        emb.join(","),
        g.split
    )
    .unwrap();
    s
}

pub fn write_corpus(samples: &[GraphSample], mut out: impl Write) -> Result<(), GraphError> {
    for g in samples {
        out.write_all(sample_line(g).as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(samples: &[GraphSample], path: impl AsRef<Path>) -> Result<(), GraphError> {
    let mut buf = Vec::new();
    write_corpus(samples, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_corpus(input: impl Read) -> Result<Vec<GraphSample>, GraphError> {
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| GraphError::Malformed {
            line: i + 1,
            message,
        };
        let g: GraphSample = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        g.validate().map_err(|e| malformed(e.to_string()))?;
        samples.push(g);
    }
    Ok(samples)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<GraphSample>, GraphError> {
    read_corpus(fs::File::open(path)?)
}

/// SHA-256 of the serialized corpus, hex encoded.
pub fn corpus_hash(samples: &[GraphSample]) -> String {
    let mut hasher = Sha256::new();
    for g in samples {
        hasher.update(sample_line(g).as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{generate_dataset, DatasetSpec, Family};

    #[test]
    fn round_trip_is_fieldwise_exact() {
        let spec = DatasetSpec {
            family: Family::MotifVariant,
            count: 40,
            bias: 0.7,
            ood_test: true,
            seed: 3,
            ..DatasetSpec::default()
        };
        let corpus = generate_dataset(&spec).unwrap();
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let back = read_corpus(buf.as_slice()).unwrap();
        assert_eq!(back, corpus);
        for (a, b) in back.iter().zip(&corpus) {
            for (ra, rb) in a.node_features.iter().zip(&b.node_features) {
                for (x, y) in ra.iter().zip(rb) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn empty_corpus_round_trips() {
        let mut buf = Vec::new();
        write_corpus(&[], &mut buf).unwrap();
        assert!(buf.is_empty());
        assert!(read_corpus(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn five_node_graph_is_one_line() {
        let g = GraphSample {
            id: 0,
            num_nodes: 5,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 4)],
            node_features: vec![[1.0, 0.1, 0.2, 0.3]; 5],
            label: 1,
            motif_class: 1,
            confounder_class: 2,
            connection_node: Some(2),
            embodiment_nodes: vec![1, 2, 3],
            split: crate::graphs::Split::Val,
        };
        let mut buf = Vec::new();
        write_corpus(&[g], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("\"num_nodes\":5"));
        assert!(text.contains("1.0000000000000001e-1"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let spec = DatasetSpec {
            count: 2,
            ..DatasetSpec::default()
        };
        let mut buf = Vec::new();
        write_corpus(&generate_dataset(&spec).unwrap(), &mut buf).unwrap();
        buf.extend_from_slice(b"{\"id\": 7, \"num_nodes\": \n");
        match read_corpus(buf.as_slice()) {
            Err(GraphError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }
}
