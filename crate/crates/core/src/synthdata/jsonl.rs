//! Dataset (de)serialization.
//!
//! A dataset directory contains `worldspec.json`, `vocab.json`, and one
//! JSON Lines file per split (`train.jsonl`, `val.jsonl`, `test.jsonl`),
//! one scene per line:
//!
//! ```json
//! {"version":1,"features":[[...]],"boxes":[[x1,y1,x2,y2]],"classes":[...],
//!  "captions":[{"tokens":[...],"alignments":[[pos,region]]}]}
//! ```
//!
//! Floats are written in shortest exact form (up to 17 significant digits),
//! so parsing reproduces every bit and re-serializing is byte-identical.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{validate_box, Box4};

use super::{Caption, Dataset, Scene, Vocabulary, WorldSpec};

const SCHEMA_VERSION: u32 = 1;
const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    version: u32,
    features: Vec<Vec<f64>>,
    boxes: Vec<Box4>,
    classes: Vec<i64>,
    captions: Vec<Caption>,
}

/// Writes the dataset directory, creating it if needed.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let spec_json = serde_json::to_string_pretty(&dataset.spec)?;
    fs::write(dir.join("worldspec.json"), spec_json + "\n")?;
    let vocab_json = serde_json::to_string_pretty(&dataset.vocab)?;
    fs::write(dir.join("vocab.json"), vocab_json + "\n")?;

    for (name, scenes) in SPLITS
        .iter()
        .zip([&dataset.train, &dataset.val, &dataset.test])
    {
        let file = fs::File::create(dir.join(format!("{name}.jsonl")))?;
        let mut w = BufWriter::new(file);
        for scene in scenes {
            let record = SceneRecord {
                version: SCHEMA_VERSION,
                features: scene.features.clone(),
                boxes: scene.boxes.clone(),
                classes: scene.classes.clone(),
                captions: scene.captions.clone(),
            };
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Reads and validates a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let spec_path = dir.join("worldspec.json");
    let spec_text = fs::read_to_string(&spec_path)
        .map_err(|e| Error::data(format!("{}: {e}", spec_path.display())))?;
    let spec: WorldSpec = serde_json::from_str(&spec_text)
        .map_err(|e| Error::data(format!("{}: {e}", spec_path.display())))?;
    spec.validate()?;

    let vocab_path = dir.join("vocab.json");
    let vocab_text = fs::read_to_string(&vocab_path)
        .map_err(|e| Error::data(format!("{}: {e}", vocab_path.display())))?;
    let vocab: Vocabulary = serde_json::from_str(&vocab_text)
        .map_err(|e| Error::data(format!("{}: {e}", vocab_path.display())))?;
    vocab.validate()?;

    let mut splits: Vec<Vec<Scene>> = Vec::with_capacity(3);
    for name in SPLITS {
        let path = dir.join(format!("{name}.jsonl"));
        let file =
            fs::File::open(&path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let reader = BufReader::new(file);
        let mut scenes = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| {
                Error::data(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SceneRecord = serde_json::from_str(&line).map_err(|e| {
                Error::data(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            let scene = validate_record(record, &spec, &vocab).map_err(|e| {
                Error::data(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            scenes.push(Scene {
                id: scenes.len(),
                ..scene
            });
        }
        if scenes.is_empty() {
            return Err(Error::data(format!(
                "{}: split has no scenes",
                path.display()
            )));
        }
        splits.push(scenes);
    }

    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(Dataset {
        spec,
        vocab,
        train,
        val,
        test,
    })
}

fn validate_record(record: SceneRecord, spec: &WorldSpec, vocab: &Vocabulary) -> Result<Scene> {
    if record.version != SCHEMA_VERSION {
        return Err(Error::data(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            record.version
        )));
    }
    let n = record.features.len();
    if n != spec.scene_regions {
        return Err(Error::data(format!(
            "scene has {n} regions, spec says {}",
            spec.scene_regions
        )));
    }
    if record.boxes.len() != n || record.classes.len() != n {
        return Err(Error::data(
            "features, boxes, and classes must have equal length",
        ));
    }
    for f in &record.features {
        if f.len() != spec.class_embed_dim {
            return Err(Error::data(format!(
                "feature has dim {}, spec says {}",
                f.len(),
                spec.class_embed_dim
            )));
        }
        if !f.iter().all(|x| x.is_finite()) {
            return Err(Error::data("non-finite feature value"));
        }
    }
    for b in &record.boxes {
        validate_box(b)?;
        if b.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::data(format!("box outside [0,1]: {b:?}")));
        }
    }
    let c_max = spec.num_classes as i64;
    if record.classes.iter().any(|&c| c < -1 || c >= c_max) {
        return Err(Error::data("class id out of range"));
    }
    if !record.classes.iter().any(|&c| c >= 0) {
        return Err(Error::data("scene has no non-distractor region"));
    }
    if record.captions.is_empty() {
        return Err(Error::data("scene has no captions"));
    }
    for cap in &record.captions {
        if cap.tokens.len() < 3 {
            return Err(Error::data("caption too short for BOS + word + EOS"));
        }
        if cap.tokens[0] != vocab.bos || *cap.tokens.last().unwrap() != vocab.eos {
            return Err(Error::data("caption must start with BOS and end with EOS"));
        }
        if cap.tokens.iter().any(|&t| t >= vocab.size()) {
            return Err(Error::data("caption token id out of vocabulary"));
        }
        for &(pos, region) in &cap.alignments {
            if pos >= cap.tokens.len() || region >= n {
                return Err(Error::data(format!(
                    "alignment ({pos},{region}) out of range"
                )));
            }
            let word = cap.tokens[pos];
            let class = vocab.class_of_word(word).ok_or_else(|| {
                Error::data(format!("alignment at position {pos} is not an object word"))
            })?;
            if record.classes[region] != class as i64 {
                return Err(Error::data(format!(
                    "alignment class mismatch: word class {class}, region class {}",
                    record.classes[region]
                )));
            }
        }
    }

    Ok(Scene {
        id: 0,
        features: record.features,
        boxes: record.boxes,
        classes: record.classes,
        captions: record.captions,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{generate, WorldSpec};
    use super::*;

    fn tiny() -> Dataset {
        generate(&WorldSpec {
            seed: 3,
            train_scenes: 12,
            val_scenes: 3,
            test_scenes: 3,
            ..WorldSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_structurally_equal() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.spec, back.spec);
        assert_eq!(ds.vocab, back.vocab);
        assert_eq!(ds.train, back.train);
        assert_eq!(ds.val, back.val);
        assert_eq!(ds.test, back.test);
    }

    #[test]
    fn save_is_byte_identical_across_runs() {
        let ds = tiny();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        save_dataset(&ds, d1.path()).unwrap();
        save_dataset(&ds, d2.path()).unwrap();
        for name in ["worldspec.json", "vocab.json", "train.jsonl", "val.jsonl", "test.jsonl"] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn save_load_save_preserves_bytes() {
        let ds = tiny();
        let d1 = tempfile::tempdir().unwrap();
        save_dataset(&ds, d1.path()).unwrap();
        let back = load_dataset(d1.path()).unwrap();
        let d2 = tempfile::tempdir().unwrap();
        save_dataset(&back, d2.path()).unwrap();
        let a = std::fs::read(d1.path().join("train.jsonl")).unwrap();
        let b = std::fs::read(d2.path().join("train.jsonl")).unwrap();
        assert_eq!(a, b, "float round-trip must be exact");
    }

    #[test]
    fn unknown_version_is_an_explicit_error() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join("val.jsonl");
        let text = std::fs::read_to_string(&path).unwrap();
        let bumped = text.replace("{\"version\":1,", "{\"version\":9,");
        std::fs::write(&path, bumped).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("version"), "{msg}");
        assert!(msg.contains("val.jsonl:1"), "{msg}");
    }

    #[test]
    fn truncated_line_is_a_parse_error_with_context() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join("test.jsonl");
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let cut = lines[1].len() / 2;
        let truncated = &lines[1][..cut];
        lines[1] = truncated;
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("test.jsonl:2"), "{err}");
    }

    #[test]
    fn corrupted_alignment_is_rejected() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let path = dir.path().join("train.jsonl");
        let text = std::fs::read_to_string(&path).unwrap();
        // Point the first alignment at region 999.
        let needle = "\"alignments\":[[";
        let at = text.find(needle).unwrap() + needle.len();
        let comma = text[at..].find(',').unwrap() + at;
        let end = text[comma..].find(']').unwrap() + comma;
        let corrupted = format!("{}{}{}", &text[..comma], ",999", &text[end..]);
        std::fs::write(&path, corrupted).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
