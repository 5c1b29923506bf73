//! Prediction files: one JSON record `{"id": .., "scores": [..]}` per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PredictionSet;
use crate::error::{MmnError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub scores: Vec<f64>,
}

pub fn write_predictions(preds: &PredictionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| MmnError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for i in 0..preds.len() {
        let rec = ScoreRecord { id: preds.ids[i].clone(), scores: preds.row(i).to_vec() };
        serde_json::to_writer(&mut w, &rec).map_err(|e| MmnError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| MmnError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| MmnError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord =
            serde_json::from_str(&line).map_err(|e| MmnError::Parse { line: i + 1, msg: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}
