//! Synthetic grounded-captioning world.
//!
//! Scenes contain a handful of objects (class embedding + noise as the
//! region feature, a box, a class id) plus random distractor regions.
//! Captions follow a rigid template, e.g. "a red cube above a blue torus",
//! and every object word is annotated with the region it refers to, so
//! grounding quality is measurable without human labels.
//!
//! With `feature_noise = 0` the region features equal the class embeddings
//! exactly, emulating a perfect object detector.
//!
//! Generation is deterministic: the seed fixes everything, and each scene
//! draws from its own derived stream, so generation order (or parallelism)
//! cannot change the output.

mod jsonl;

pub use jsonl::{load_dataset, save_dataset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{iou_unchecked, Box4};
use crate::parallel::par_map;
use crate::rng::{Rng, STREAM_SCENES, STREAM_WORLD};

/// Default object-word inventory; truncated or extended to `num_classes`.
const OBJECT_WORDS: [&str; 12] = [
    "cube", "sphere", "cone", "cylinder", "torus", "prism", "pyramid", "disk", "wedge", "ring",
    "block", "slab",
];

/// Relation words; derived from box geometry, so the set is fixed.
const RELATION_WORDS: [&str; 3] = ["above", "below", "beside"];

/// Caption template: the order in which a scene's objects are mentioned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    /// Objects in sampled scene order.
    Forward,
    /// Objects in reversed order.
    Reverse,
}

fn default_seed() -> u64 {
    0
}
fn default_num_classes() -> usize {
    12
}
fn default_class_embed_dim() -> usize {
    16
}
fn default_scene_regions() -> usize {
    10
}
fn default_feature_noise() -> f64 {
    0.1
}
fn default_templates() -> Vec<Template> {
    vec![Template::Forward, Template::Reverse]
}
fn default_attribute_words() -> Vec<String> {
    ["red", "blue", "green", "yellow"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}
fn default_train_scenes() -> usize {
    2000
}
fn default_val_scenes() -> usize {
    200
}
fn default_test_scenes() -> usize {
    200
}

/// Everything that defines a synthetic world. Identical specs generate
/// byte-identical datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Number of object classes (one object word each).
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    /// Raw region feature dimension d_r.
    #[serde(default = "default_class_embed_dim")]
    pub class_embed_dim: usize,
    /// Regions per scene, distractors included.
    #[serde(default = "default_scene_regions")]
    pub scene_regions: usize,
    /// Standard deviation of feature noise; 0 emulates a perfect detector.
    #[serde(default = "default_feature_noise")]
    pub feature_noise: f64,
    /// One caption per template per scene.
    #[serde(default = "default_templates")]
    pub templates: Vec<Template>,
    #[serde(default = "default_attribute_words")]
    pub attribute_words: Vec<String>,
    #[serde(default = "default_train_scenes")]
    pub train_scenes: usize,
    #[serde(default = "default_val_scenes")]
    pub val_scenes: usize,
    #[serde(default = "default_test_scenes")]
    pub test_scenes: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty spec uses defaults")
    }
}

impl WorldSpec {
    /// Validates field ranges and cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be >= 2"));
        }
        if self.scene_regions < 2 {
            return Err(Error::config("scene_regions must be >= 2"));
        }
        if self.num_classes > self.class_embed_dim {
            return Err(Error::config(format!(
                "num_classes ({}) must not exceed class_embed_dim ({}) so class \
                 embeddings can be orthogonalized",
                self.num_classes, self.class_embed_dim
            )));
        }
        if !(self.feature_noise.is_finite() && self.feature_noise >= 0.0) {
            return Err(Error::config("feature_noise must be finite and >= 0"));
        }
        if self.templates.is_empty() {
            return Err(Error::config("templates must not be empty"));
        }
        if self.attribute_words.is_empty() {
            return Err(Error::config("attribute_words must not be empty"));
        }
        let mut attrs = self.attribute_words.clone();
        attrs.sort();
        attrs.dedup();
        if attrs.len() != self.attribute_words.len() {
            return Err(Error::config("attribute_words contains duplicates"));
        }
        if self.train_scenes < 1 || self.val_scenes < 1 || self.test_scenes < 1 {
            return Err(Error::config("split sizes must be >= 1"));
        }
        Ok(())
    }
}

/// Token inventory with part-of-speech style flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Token strings; index is the token id.
    pub tokens: Vec<String>,
    pub pad: usize,
    pub bos: usize,
    pub eos: usize,
    /// The article "a".
    pub article: usize,
    pub relation_ids: Vec<usize>,
    pub attribute_ids: Vec<usize>,
    /// Object word ids; index k is the word for class k.
    pub object_word_ids: Vec<usize>,
    /// Class id per token, -1 for non-object tokens.
    pub class_of: Vec<i64>,
    /// True for object and attribute words (the synthetic stand-in for
    /// "noun or adjective"); drives the word-filter training variants.
    pub groundable: Vec<bool>,
}

impl Vocabulary {
    /// Number of tokens.
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// Class id of an object word, if `id` is one.
    pub fn class_of_word(&self, id: usize) -> Option<usize> {
        match self.class_of.get(id) {
            Some(&c) if c >= 0 => Some(c as usize),
            _ => None,
        }
    }

    /// True when `id` is an object word.
    pub fn is_object_word(&self, id: usize) -> bool {
        self.class_of_word(id).is_some()
    }

    /// True when `id` is an object or attribute word.
    pub fn is_groundable(&self, id: usize) -> bool {
        self.groundable.get(id).copied().unwrap_or(false)
    }

    /// Token id for a string.
    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    /// Internal consistency checks, applied when loading from disk.
    pub fn validate(&self) -> Result<()> {
        let s = self.size();
        let mut uniq = self.tokens.clone();
        uniq.sort();
        uniq.dedup();
        if uniq.len() != s {
            return Err(Error::data("vocabulary contains duplicate tokens"));
        }
        if self.class_of.len() != s || self.groundable.len() != s {
            return Err(Error::data("vocabulary flag arrays must match token count"));
        }
        for &id in [self.pad, self.bos, self.eos, self.article]
            .iter()
            .chain(&self.relation_ids)
            .chain(&self.attribute_ids)
            .chain(&self.object_word_ids)
        {
            if id >= s {
                return Err(Error::data(format!("vocabulary id {id} out of range")));
            }
        }
        if self.pad == self.bos || self.pad == self.eos || self.bos == self.eos {
            return Err(Error::data("PAD/BOS/EOS ids must be distinct"));
        }
        for (k, &w) in self.object_word_ids.iter().enumerate() {
            if self.class_of[w] != k as i64 {
                return Err(Error::data(format!(
                    "object word {w} does not map back to class {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Generated world: the vocabulary plus the class embedding table used to
/// build region features.
#[derive(Clone, Debug)]
pub struct World {
    pub vocab: Vocabulary,
    /// `num_classes` rows of `class_embed_dim` orthonormal unit vectors.
    pub class_embeddings: Vec<Vec<f64>>,
}

/// One synthetic scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    /// Index within its split (line number in the JSONL file).
    pub id: usize,
    /// Raw region features, `scene_regions` rows of `class_embed_dim`.
    pub features: Vec<Vec<f64>>,
    pub boxes: Vec<Box4>,
    /// Class id per region, -1 for distractors.
    pub classes: Vec<i64>,
    pub captions: Vec<Caption>,
}

/// A tokenized caption with word-to-region alignments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    /// Token ids, starting with BOS and ending with EOS.
    pub tokens: Vec<usize>,
    /// `(token position, region index)` for every object word.
    pub alignments: Vec<(usize, usize)>,
}

impl Caption {
    /// Tokens without BOS/EOS/PAD.
    pub fn content_tokens(&self, vocab: &Vocabulary) -> Vec<usize> {
        self.tokens
            .iter()
            .copied()
            .filter(|&t| t != vocab.bos && t != vocab.eos && t != vocab.pad)
            .collect()
    }

    /// Aligned region for the token at `pos`, if annotated.
    pub fn region_at(&self, pos: usize) -> Option<usize> {
        self.alignments
            .iter()
            .find(|(p, _)| *p == pos)
            .map(|(_, r)| *r)
    }
}

/// A full generated dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub spec: WorldSpec,
    pub vocab: Vocabulary,
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
    pub test: Vec<Scene>,
}

impl Dataset {
    /// Scenes of the named split.
    pub fn split(&self, name: &str) -> Result<&[Scene]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::config(format!(
                "unknown split '{other}' (expected train, val, or test)"
            ))),
        }
    }
}

/// Builds the vocabulary and orthonormal class embeddings for `spec`.
pub fn gen_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;

    let mut tokens: Vec<String> = vec![
        "<pad>".to_string(),
        "<bos>".to_string(),
        "<eos>".to_string(),
        "a".to_string(),
    ];
    let (pad, bos, eos, article) = (0, 1, 2, 3);

    let relation_ids: Vec<usize> = RELATION_WORDS
        .iter()
        .map(|w| {
            tokens.push(w.to_string());
            tokens.len() - 1
        })
        .collect();
    let attribute_ids: Vec<usize> = spec
        .attribute_words
        .iter()
        .map(|w| {
            tokens.push(w.clone());
            tokens.len() - 1
        })
        .collect();
    let object_word_ids: Vec<usize> = (0..spec.num_classes)
        .map(|k| {
            let word = OBJECT_WORDS
                .get(k)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("obj{k}"));
            tokens.push(word);
            tokens.len() - 1
        })
        .collect();

    let mut uniq = tokens.clone();
    uniq.sort();
    uniq.dedup();
    if uniq.len() != tokens.len() {
        return Err(Error::config(
            "attribute_words collide with built-in tokens",
        ));
    }

    let mut class_of = vec![-1i64; tokens.len()];
    for (k, &w) in object_word_ids.iter().enumerate() {
        class_of[w] = k as i64;
    }
    let mut groundable = vec![false; tokens.len()];
    for &w in object_word_ids.iter().chain(&attribute_ids) {
        groundable[w] = true;
    }

    let vocab = Vocabulary {
        tokens,
        pad,
        bos,
        eos,
        article,
        relation_ids,
        attribute_ids,
        object_word_ids,
        class_of,
        groundable,
    };
    vocab.validate()?;

    // Random Gaussian vectors, orthonormalized by modified Gram-Schmidt.
    // num_classes <= class_embed_dim is validated, so this terminates.
    let mut rng = Rng::new(spec.seed).derive(STREAM_WORLD);
    let d = spec.class_embed_dim;
    let mut embeddings: Vec<Vec<f64>> = Vec::with_capacity(spec.num_classes);
    for _ in 0..spec.num_classes {
        loop {
            let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            for prev in &embeddings {
                let proj: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (vi, pi) in v.iter_mut().zip(prev) {
                    *vi -= proj * pi;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for vi in &mut v {
                    *vi /= norm;
                }
                embeddings.push(v);
                break;
            }
        }
    }

    Ok(World {
        vocab,
        class_embeddings: embeddings,
    })
}

/// Attribute word id for a class: classes cycle through the palette.
fn attribute_of_class(vocab: &Vocabulary, class: usize) -> usize {
    vocab.attribute_ids[class % vocab.attribute_ids.len()]
}

/// Geometric relation between two boxes, by center displacement. Vertical
/// wins ties in magnitude; y grows downward as in image coordinates.
fn relation_of(vocab: &Vocabulary, a: &Box4, b: &Box4) -> usize {
    let (cya, cyb) = ((a[1] + a[3]) / 2.0, (b[1] + b[3]) / 2.0);
    let (cxa, cxb) = ((a[0] + a[2]) / 2.0, (b[0] + b[2]) / 2.0);
    let dy = cya - cyb;
    let dx = cxa - cxb;
    if dy.abs() > dx.abs() {
        if dy < 0.0 {
            vocab.relation_ids[0] // above
        } else {
            vocab.relation_ids[1] // below
        }
    } else {
        vocab.relation_ids[2] // beside
    }
}

/// Places one box with every pairwise IoU against `placed` at most 0.3.
fn place_box(rng: &mut Rng, placed: &[Box4]) -> Result<Box4> {
    const MAX_TRIES: usize = 200;
    const MAX_IOU: f64 = 0.3;
    for _ in 0..MAX_TRIES {
        let w = rng.range_f64(0.15, 0.35);
        let h = rng.range_f64(0.15, 0.35);
        let x1 = rng.range_f64(0.0, 1.0 - w);
        let y1 = rng.range_f64(0.0, 1.0 - h);
        let b = [x1, y1, x1 + w, y1 + h];
        if placed.iter().all(|p| iou_unchecked(p, &b) <= MAX_IOU) {
            return Ok(b);
        }
    }
    Err(Error::numeric(format!(
        "box placement failed after {MAX_TRIES} tries ({} boxes placed)",
        placed.len()
    )))
}

/// Generates one scene from its own random stream.
pub fn gen_scene(world: &World, spec: &WorldSpec, rng: &mut Rng) -> Result<Scene> {
    let n = spec.scene_regions;
    let d = spec.class_embed_dim;
    let vocab = &world.vocab;

    // 2 or 3 objects, capped by regions and classes.
    let k_max = 3.min(n).min(spec.num_classes);
    let k_min = 2.min(k_max);
    let k = k_min + rng.below(k_max - k_min + 1);

    let object_classes = rng.sample_distinct(spec.num_classes, k);

    // Objects first, then distractors, in one placement pass.
    let mut boxes: Vec<Box4> = Vec::with_capacity(n);
    for _ in 0..n {
        let b = place_box(rng, &boxes)?;
        boxes.push(b);
    }

    let mut features: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut classes: Vec<i64> = Vec::with_capacity(n);
    for slot in 0..n {
        if slot < k {
            let class = object_classes[slot];
            let embed = &world.class_embeddings[class];
            let f: Vec<f64> = embed
                .iter()
                .map(|&e| e + spec.feature_noise * rng.normal())
                .collect();
            features.push(f);
            classes.push(class as i64);
        } else {
            let mut f: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for x in &mut f {
                *x /= norm;
            }
            features.push(f);
            classes.push(-1);
        }
    }

    // Shuffle region order so object slots are not predictable.
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let mut position_of = vec![0usize; n];
    for (new_idx, &old_idx) in perm.iter().enumerate() {
        position_of[old_idx] = new_idx;
    }
    let features: Vec<Vec<f64>> = perm.iter().map(|&old| features[old].clone()).collect();
    let shuffled_boxes: Vec<Box4> = perm.iter().map(|&old| boxes[old]).collect();
    let shuffled_classes: Vec<i64> = perm.iter().map(|&old| classes[old]).collect();

    // One caption per template; alignments point at post-shuffle regions.
    let captions: Vec<Caption> = spec
        .templates
        .iter()
        .map(|template| {
            let order: Vec<usize> = match template {
                Template::Forward => (0..k).collect(),
                Template::Reverse => (0..k).rev().collect(),
            };
            let mut tokens = vec![vocab.bos];
            let mut alignments = Vec::new();
            for (j, &slot) in order.iter().enumerate() {
                if j > 0 {
                    tokens.push(relation_of(vocab, &boxes[order[j - 1]], &boxes[slot]));
                }
                tokens.push(vocab.article);
                let class = object_classes[slot];
                tokens.push(attribute_of_class(vocab, class));
                tokens.push(vocab.object_word_ids[class]);
                alignments.push((tokens.len() - 1, position_of[slot]));
            }
            tokens.push(vocab.eos);
            Caption { tokens, alignments }
        })
        .collect();

    Ok(Scene {
        id: 0, // assigned by the caller once the split is known
        features,
        boxes: shuffled_boxes,
        classes: shuffled_classes,
        captions,
    })
}

/// Generates the full dataset for `spec`. Scenes are generated from
/// per-scene derived streams and assembled in index order, so the result is
/// independent of parallelism.
pub fn generate(spec: &WorldSpec) -> Result<Dataset> {
    let world = gen_world(spec)?;
    let total = spec.train_scenes + spec.val_scenes + spec.test_scenes;
    let scene_stream = Rng::new(spec.seed).derive(STREAM_SCENES);

    let indices: Vec<usize> = (0..total).collect();
    let results = par_map(&indices, |&i| {
        let mut rng = scene_stream.derive(i as u64);
        gen_scene(&world, spec, &mut rng)
    });

    let mut scenes = Vec::with_capacity(total);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => scenes.push(s),
            Err(e) => return Err(Error::numeric(format!("scene {i}: {e}"))),
        }
    }

    let mut iter = scenes.into_iter();
    let mut take = |count: usize| -> Vec<Scene> {
        let mut split: Vec<Scene> = Vec::with_capacity(count);
        for id in 0..count {
            let mut s = iter.next().expect("scene count matches split sizes");
            s.id = id;
            split.push(s);
        }
        split
    };
    let train = take(spec.train_scenes);
    let val = take(spec.val_scenes);
    let test = take(spec.test_scenes);

    Ok(Dataset {
        spec: spec.clone(),
        vocab: world.vocab,
        train,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> WorldSpec {
        WorldSpec {
            seed: 11,
            train_scenes: 30,
            val_scenes: 5,
            test_scenes: 5,
            ..WorldSpec::default()
        }
    }

    #[test]
    fn default_spec_round_trips_through_json() {
        let spec = WorldSpec::default();
        assert_eq!(spec.num_classes, 12);
        assert_eq!(spec.scene_regions, 10);
        assert_eq!(spec.train_scenes, 2000);
        assert_eq!(spec.attribute_words.len(), 4);
        let json = serde_json::to_string(&spec).unwrap();
        let back: WorldSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn unknown_spec_field_is_rejected_by_name() {
        let err = serde_json::from_str::<WorldSpec>("{\"num_clases\": 5}").unwrap_err();
        assert!(err.to_string().contains("num_clases"), "{err}");
    }

    #[test]
    fn world_vocab_layout() {
        let world = gen_world(&WorldSpec::default()).unwrap();
        let v = &world.vocab;
        assert_eq!(v.size(), 4 + 3 + 4 + 12);
        assert_eq!(v.tokens[v.pad], "<pad>");
        assert_eq!(v.tokens[v.bos], "<bos>");
        assert_eq!(v.tokens[v.eos], "<eos>");
        assert_eq!(v.object_word_ids.len(), 12);
        assert!(v.is_object_word(v.object_word_ids[3]));
        assert_eq!(v.class_of_word(v.object_word_ids[3]), Some(3));
        assert!(v.is_groundable(v.attribute_ids[0]));
        assert!(!v.is_groundable(v.article));
        v.validate().unwrap();
    }

    #[test]
    fn class_embeddings_are_orthonormal() {
        let world = gen_world(&WorldSpec::default()).unwrap();
        let e = &world.class_embeddings;
        for i in 0..e.len() {
            for j in 0..=i {
                let dot: f64 = e[i].iter().zip(&e[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "<e{i}, e{j}> = {dot}");
            }
        }
    }

    #[test]
    fn same_seed_same_world() {
        let spec = WorldSpec::default();
        let a = gen_world(&spec).unwrap();
        let b = gen_world(&spec).unwrap();
        assert_eq!(a.vocab, b.vocab);
        assert_eq!(a.class_embeddings, b.class_embeddings);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = WorldSpec::default();
        s.num_classes = 20; // exceeds embed dim 16
        assert!(s.validate().is_err());
        let mut s = WorldSpec::default();
        s.feature_noise = -0.5;
        assert!(s.validate().is_err());
        let mut s = WorldSpec::default();
        s.templates.clear();
        assert!(s.validate().is_err());
        let mut s = WorldSpec::default();
        s.attribute_words = vec!["red".into(), "red".into()];
        assert!(s.validate().is_err());
    }

    #[test]
    fn scenes_have_consistent_structure() {
        let spec = tiny_spec();
        let ds = generate(&spec).unwrap();
        assert_eq!(ds.train.len(), 30);
        assert_eq!(ds.val.len(), 5);
        assert_eq!(ds.test.len(), 5);
        for (i, scene) in ds.train.iter().enumerate() {
            assert_eq!(scene.id, i);
            assert_eq!(scene.features.len(), spec.scene_regions);
            assert_eq!(scene.boxes.len(), spec.scene_regions);
            assert_eq!(scene.classes.len(), spec.scene_regions);
            let objects = scene.classes.iter().filter(|&&c| c >= 0).count();
            assert!((2..=3).contains(&objects));
            assert_eq!(scene.captions.len(), 2);
            for cap in &scene.captions {
                assert_eq!(cap.tokens[0], ds.vocab.bos);
                assert_eq!(*cap.tokens.last().unwrap(), ds.vocab.eos);
                assert_eq!(cap.alignments.len(), objects);
                for &(pos, region) in &cap.alignments {
                    let word = cap.tokens[pos];
                    let class = ds.vocab.class_of_word(word).expect("aligned word is an object");
                    assert_eq!(scene.classes[region], class as i64, "class-consistent alignment");
                }
            }
        }
    }

    #[test]
    fn all_box_pairs_respect_iou_cap() {
        let ds = generate(&tiny_spec()).unwrap();
        for scene in ds.train.iter().chain(&ds.val).chain(&ds.test) {
            for i in 0..scene.boxes.len() {
                for j in 0..i {
                    let v = iou_unchecked(&scene.boxes[i], &scene.boxes[j]);
                    assert!(v <= 0.3, "boxes {i},{j} overlap too much: {v}");
                }
            }
        }
    }

    #[test]
    fn mean_pairwise_gt_box_iou_is_bounded() {
        // Generator property over 1000 scenes: mean pairwise IoU between
        // ground-truth (object) boxes stays at or below the 0.3 cap.
        let spec = WorldSpec {
            seed: 5,
            train_scenes: 1000,
            val_scenes: 1,
            test_scenes: 1,
            ..WorldSpec::default()
        };
        let ds = generate(&spec).unwrap();
        let mut total = 0.0;
        let mut pairs = 0usize;
        for scene in &ds.train {
            let gt: Vec<&Box4> = scene
                .boxes
                .iter()
                .zip(&scene.classes)
                .filter(|(_, &c)| c >= 0)
                .map(|(b, _)| b)
                .collect();
            for i in 0..gt.len() {
                for j in 0..i {
                    total += iou_unchecked(gt[i], gt[j]);
                    pairs += 1;
                }
            }
        }
        let mean = total / pairs as f64;
        assert!(mean <= 0.3, "mean pairwise GT IoU {mean}");
    }

    #[test]
    fn noiseless_features_equal_embeddings_exactly() {
        let spec = WorldSpec {
            feature_noise: 0.0,
            ..tiny_spec()
        };
        let world = gen_world(&spec).unwrap();
        let ds = generate(&spec).unwrap();
        for scene in &ds.train {
            for (region, &class) in scene.classes.iter().enumerate() {
                if class >= 0 {
                    let want = &world.class_embeddings[class as usize];
                    assert_eq!(&scene.features[region], want, "noiseless feature must be exact");
                }
            }
        }
    }

    #[test]
    fn noiseless_nearest_neighbor_is_perfect() {
        let spec = WorldSpec {
            feature_noise: 0.0,
            ..tiny_spec()
        };
        let world = gen_world(&spec).unwrap();
        let ds = generate(&spec).unwrap();
        for scene in &ds.train {
            for (region, &class) in scene.classes.iter().enumerate() {
                if class < 0 {
                    continue;
                }
                let best = world
                    .class_embeddings
                    .iter()
                    .enumerate()
                    .map(|(k, e)| {
                        let dot: f64 =
                            e.iter().zip(&scene.features[region]).map(|(a, b)| a * b).sum();
                        (k, dot)
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap()
                    .0;
                assert_eq!(best as i64, class);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = tiny_spec();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.test, b.test);
        assert_eq!(a.vocab, b.vocab);
    }

    #[test]
    fn forward_and_reverse_templates_mention_same_objects() {
        let ds = generate(&tiny_spec()).unwrap();
        for scene in &ds.train {
            let objs = |cap: &Caption| {
                let mut v: Vec<usize> = cap
                    .tokens
                    .iter()
                    .copied()
                    .filter(|&t| ds.vocab.is_object_word(t))
                    .collect();
                v.sort_unstable();
                v
            };
            assert_eq!(objs(&scene.captions[0]), objs(&scene.captions[1]));
            let rev: Vec<usize> = scene.captions[1]
                .tokens
                .iter()
                .copied()
                .filter(|&t| ds.vocab.is_object_word(t))
                .rev()
                .collect();
            let fwd: Vec<usize> = scene.captions[0]
                .tokens
                .iter()
                .copied()
                .filter(|&t| ds.vocab.is_object_word(t))
                .collect();
            assert_eq!(fwd, rev, "reverse template mentions objects backwards");
        }
    }
}
