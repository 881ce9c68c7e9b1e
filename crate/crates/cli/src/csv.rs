//! Embedding CSV: `index,label,split,z1,...,zd`.
//!
//! Floats print with 17 significant digits, enough to reproduce the exact
//! double on re-parse.

use std::path::Path;

use tscn_core::data::Split;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub index: usize,
    pub label: usize,
    pub split: Split,
    pub z: Vec<f64>,
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_embedding(path: &Path, dim: usize, rows: &[EmbeddingRow]) -> Result<()> {
    let mut out = String::from("index,label,split");
    for j in 1..=dim {
        out.push_str(&format!(",z{j}"));
    }
    out.push('\n');
    for row in rows {
        let split = match row.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        out.push_str(&format!("{},{},{}", row.index, row.label, split));
        for v in &row.z {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Parse an embedding CSV; returns the embedding width and the rows.
pub fn read_embedding(path: &Path) -> Result<(usize, Vec<EmbeddingRow>)> {
    let bad = |reason: String| CliError::Csv { path: path.into(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "index" || cols[1] != "label" || cols[2] != "split" {
        return Err(bad(format!("unexpected header '{header}'")));
    }
    for (j, col) in cols[3..].iter().enumerate() {
        if *col != format!("z{}", j + 1) {
            return Err(bad(format!("unexpected embedding column '{col}'")));
        }
    }
    let dim = cols.len() - 3;

    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(bad(format!("line {}: expected {} fields", lineno + 2, dim + 3)));
        }
        let parse_err = |what: &str| bad(format!("line {}: bad {what}", lineno + 2));
        let index: usize = fields[0].parse().map_err(|_| parse_err("index"))?;
        let label: usize = fields[1].parse().map_err(|_| parse_err("label"))?;
        let split = match fields[2] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(bad(format!("line {}: bad split '{other}'", lineno + 2))),
        };
        let z = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| parse_err("float")))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(EmbeddingRow { index, label, split, z });
    }
    Ok((dim, rows))
}
