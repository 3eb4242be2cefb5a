//! Versioned JSON checkpoints with bit-exact round trips.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::lstm::LstmWeights;
use crate::model::params::{LocalizerParams, LocalizerVariant, ModelDims, ModelParams};
use crate::numcore::{Dims, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    dims: ModelDims,
    localizer_variant: LocalizerVariant,
    tensors: Vec<TensorRecord>,
}

/// Writes `params` as JSON. Tensor order follows `named_tensors`.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let tensors = params
        .named_tensors()
        .into_iter()
        .map(|(name, t)| TensorRecord {
            name: name.to_string(),
            shape: t.dims().as_list(),
            data: t.data().to_vec(),
        })
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        dims: params.dims.clone(),
        localizer_variant: params.localizer.variant(),
        tensors,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn take_tensor(records: &mut Vec<TensorRecord>, name: &str) -> Result<Tensor> {
    if records.is_empty() {
        return Err(Error::data(format!("checkpoint is missing tensor {name}")));
    }
    let rec = records.remove(0);
    if rec.name != name {
        return Err(Error::data(format!(
            "checkpoint tensor order mismatch: expected {name}, found {}",
            rec.name
        )));
    }
    let dims = Dims::from_list(&rec.shape).ok_or_else(|| {
        Error::data(format!("checkpoint tensor {name} has shape {:?}", rec.shape))
    })?;
    if dims.len() != rec.data.len() {
        return Err(Error::data(format!(
            "checkpoint tensor {name} declares {} elements but carries {}",
            dims.len(),
            rec.data.len()
        )));
    }
    if !rec.data.iter().all(|v| v.is_finite()) {
        return Err(Error::data(format!(
            "checkpoint tensor {name} has non-finite entries"
        )));
    }
    Ok(match dims {
        Dims::Vector(_) => Tensor::vector(rec.data),
        Dims::Matrix { rows, cols } => Tensor::matrix(rows, cols, rec.data),
    })
}

fn expect_shape(t: &Tensor, name: &str, shape: &[usize]) -> Result<()> {
    if t.dims().as_list() != shape {
        return Err(Error::data(format!(
            "checkpoint tensor {name} has shape {:?}, expected {shape:?}",
            t.dims().as_list()
        )));
    }
    Ok(())
}

/// Reads a checkpoint back. Rejects version, name-order, and shape drift.
pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let reader = BufReader::new(File::open(path)?);
    let file: CheckpointFile = serde_json::from_reader(reader)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::data(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    let dims = file.dims;
    dims.validate().map_err(|e| {
        Error::data(format!("checkpoint carries invalid dims: {e}"))
    })?;
    let d = dims.region_dim();
    let (e, h, s) = (dims.embed, dims.hidden, dims.vocab_size);
    let mut records = file.tensors;

    let w_e = take_tensor(&mut records, "w_e")?;
    expect_shape(&w_e, "w_e", &[s, e])?;
    let attn_w = take_tensor(&mut records, "attn_lstm.w")?;
    expect_shape(&attn_w, "attn_lstm.w", &[4 * h, (d + h + e) + h])?;
    let attn_b = take_tensor(&mut records, "attn_lstm.b")?;
    expect_shape(&attn_b, "attn_lstm.b", &[4 * h])?;
    let lang_w = take_tensor(&mut records, "lang_lstm.w")?;
    expect_shape(&lang_w, "lang_lstm.w", &[4 * h, (d + h) + h])?;
    let lang_b = take_tensor(&mut records, "lang_lstm.b")?;
    expect_shape(&lang_b, "lang_lstm.b", &[4 * h])?;
    let w_a = take_tensor(&mut records, "w_a")?;
    expect_shape(&w_a, "w_a", &[d, h])?;
    let w_aa = take_tensor(&mut records, "w_aa")?;
    expect_shape(&w_aa, "w_aa", &[d])?;
    let w_o = take_tensor(&mut records, "w_o")?;
    expect_shape(&w_o, "w_o", &[s, h])?;
    let localizer = match file.localizer_variant {
        LocalizerVariant::Linear => {
            let w_l = take_tensor(&mut records, "w_l")?;
            expect_shape(&w_l, "w_l", &[d, e])?;
            LocalizerParams::Linear { w_l }
        }
        LocalizerVariant::Mlp => {
            let w_l1 = take_tensor(&mut records, "w_l1")?;
            expect_shape(&w_l1, "w_l1", &[e, e])?;
            let w_l2 = take_tensor(&mut records, "w_l2")?;
            expect_shape(&w_l2, "w_l2", &[d, e])?;
            LocalizerParams::Mlp { w_l1, w_l2 }
        }
        LocalizerVariant::UseHiddenA => {
            let w_l = take_tensor(&mut records, "w_l")?;
            expect_shape(&w_l, "w_l", &[d, h])?;
            LocalizerParams::UseHiddenA { w_l }
        }
    };
    let w_c = take_tensor(&mut records, "w_c")?;
    expect_shape(&w_c, "w_c", &[dims.feature_dim, dims.num_classes])?;
    let w_loc = take_tensor(&mut records, "w_loc")?;
    expect_shape(&w_loc, "w_loc", &[dims.box_embed, 4])?;
    if let Some(extra) = records.first() {
        return Err(Error::data(format!(
            "checkpoint has unexpected extra tensor {}",
            extra.name
        )));
    }

    Ok(ModelParams {
        dims,
        w_e,
        attn_lstm: LstmWeights {
            w: attn_w,
            b: attn_b,
        },
        lang_lstm: LstmWeights {
            w: lang_w,
            b: lang_b,
        },
        w_a,
        w_aa,
        w_o,
        localizer,
        w_c,
        w_loc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn params(variant: LocalizerVariant) -> ModelParams {
        let dims = ModelDims {
            embed: 6,
            hidden: 5,
            feature_dim: 4,
            num_classes: 3,
            box_embed: 2,
            vocab_size: 9,
        };
        ModelParams::init(&dims, variant, &mut Rng::new(0x5eed)).unwrap()
    }

    #[test]
    fn round_trip_preserves_every_bit() {
        let dir = tempfile::tempdir().unwrap();
        for variant in [
            LocalizerVariant::Linear,
            LocalizerVariant::Mlp,
            LocalizerVariant::UseHiddenA,
        ] {
            let p = params(variant);
            let path = dir.path().join(format!("{}.json", variant.name()));
            save_checkpoint(&p, &path).unwrap();
            let q = load_checkpoint(&path).unwrap();
            assert_eq!(p, q, "variant {}", variant.name());
        }
    }

    #[test]
    fn save_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p = params(LocalizerVariant::Linear);
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        save_checkpoint(&p, &a).unwrap();
        save_checkpoint(&p, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save_checkpoint(&params(LocalizerVariant::Linear), &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replacen("\"version\":1", "\"version\":99", 1);
        std::fs::write(&path, text).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("version 99"), "{err}");
    }

    #[test]
    fn shape_drift_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut p = params(LocalizerVariant::Linear);
        p.w_aa = Tensor::vector(vec![0.0; 3]);
        save_checkpoint(&p, &path).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("w_aa"), "{err}");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_checkpoint(&dir.path().join("nope.json")).is_err());
    }
}
