//! Prediction interchange: JSON Lines of generated captions with attended
//! boxes, so external systems can be scored by the same metrics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::bbox::{validate_box, Box4};

/// One generated caption. `tokens` are vocabulary ids without begin/end
/// markers; `attended_boxes` carries one entry per token (null allowed for
/// systems that only attend on some words).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub scene_id: usize,
    pub tokens: Vec<usize>,
    pub attended_boxes: Vec<Option<Box4>>,
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.attended_boxes.len() {
            return Err(Error::data(format!(
                "prediction for scene {} has {} tokens but {} boxes",
                self.scene_id,
                self.tokens.len(),
                self.attended_boxes.len()
            )));
        }
        for b in self.attended_boxes.iter().flatten() {
            validate_box(b).map_err(|e| {
                Error::data(format!("prediction for scene {}: {e}", self.scene_id))
            })?;
        }
        Ok(())
    }
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| {
            Error::data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| {
            Error::data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        rec.validate()
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records() -> Vec<PredictionRecord> {
        vec![
            PredictionRecord {
                scene_id: 0,
                tokens: vec![3, 9, 11],
                attended_boxes: vec![None, Some([0.1, 0.1, 0.4, 0.4]), None],
            },
            PredictionRecord {
                scene_id: 1,
                tokens: vec![],
                attended_boxes: vec![],
            },
        ]
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let recs = records();
        write_predictions(&path, &recs).unwrap();
        let back = read_predictions(&path).unwrap();
        assert_eq!(recs, back);
    }

    #[test]
    fn mismatched_lengths_are_rejected_with_line_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        std::fs::write(
            &path,
            "{\"scene_id\":0,\"tokens\":[1,2],\"attended_boxes\":[null]}\n",
        )
        .unwrap();
        let err = read_predictions(&path).unwrap_err().to_string();
        assert!(err.contains("preds.jsonl:1"), "{err}");
        assert!(err.contains("2 tokens but 1 boxes"), "{err}");
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        std::fs::write(
            &path,
            "{\"scene_id\":0,\"tokens\":[1],\"attended_boxes\":[[0.5,0.5,0.5,0.9]]}\n",
        )
        .unwrap();
        assert!(read_predictions(&path).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        std::fs::write(
            &path,
            "{\"scene_id\":0,\"tokens\":[],\"attended_boxes\":[],\"extra\":1}\n",
        )
        .unwrap();
        assert!(read_predictions(&path).is_err());
    }
}
