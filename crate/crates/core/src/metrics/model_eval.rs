//! Runs a trained model over a dataset split and aggregates every metric.

use crate::error::{Error, Result};
use crate::metrics::attention::{attention_hit, AttentionCase};
use crate::metrics::bleu::bleu;
use crate::metrics::grounding::{
    f1_per_class, f1_per_sentence, sentence_counts, PoolEntry, PredictedObject, SentenceEval,
};
use crate::metrics::predictions::PredictionRecord;
use crate::metrics::report::GroundingReport;
use crate::model::{cyclical_forward, generate, groundable_mask, CycleConfig, ModelParams, SceneView};
use crate::parallel::par_map;
use crate::synthdata::{Dataset, Scene, Vocabulary};

/// Reference pool for one scene: every aligned object word across all of
/// the scene's captions, with the box of its aligned region.
pub fn scene_pool(scene: &Scene) -> Vec<PoolEntry> {
    let mut pool = Vec::new();
    for caption in &scene.captions {
        for &(pos, region) in &caption.alignments {
            pool.push(PoolEntry {
                word: caption.tokens[pos],
                gt_box: scene.boxes[region],
            });
        }
    }
    pool
}

/// Everything one evaluation pass produces.
pub struct EvalOutcome {
    pub report: GroundingReport,
    /// Teacher-forced decode cross-entropy per unmasked token.
    pub val_loss: f64,
    /// Greedy captions in interchange form, one per scene.
    pub predictions: Vec<PredictionRecord>,
}

struct SceneEval {
    counts: SentenceEval,
    candidate: Vec<usize>,
    references: Vec<Vec<usize>>,
    prediction: PredictionRecord,
    decoder_hits: usize,
    localizer_hits: usize,
    annotated: usize,
    ce_sum: f64,
    ce_terms: usize,
}

fn eval_scene(
    scene: &Scene,
    params: &ModelParams,
    vocab: &Vocabulary,
    groundable: &[bool],
    max_len: usize,
) -> Result<SceneEval> {
    let view = SceneView {
        features: &scene.features,
        boxes: &scene.boxes,
    };

    // Greedy caption for the grounding and language scores.
    let gen = generate(&view, params, vocab.bos, vocab.eos, max_len)?;
    let mut preds = Vec::new();
    let mut tokens = Vec::new();
    let mut attended_boxes = Vec::new();
    for step in &gen.steps {
        tokens.push(step.word);
        attended_boxes.push(Some(scene.boxes[step.attended_region]));
        if vocab.is_object_word(step.word) {
            preds.push(PredictedObject {
                word: step.word,
                attended: Some(scene.boxes[step.attended_region]),
            });
        }
    }
    let pool = scene_pool(scene);
    let counts = sentence_counts(&preds, &pool);

    // Teacher-forced pass per caption: decode loss plus attention accuracy
    // at annotated positions, with the localizer queried on the reference
    // words themselves.
    let mut decoder_hits = 0;
    let mut localizer_hits = 0;
    let mut annotated = 0;
    let mut ce_sum = 0.0;
    let mut ce_terms = 0;
    for caption in &scene.captions {
        let targets: Vec<usize> = caption.tokens[1..].to_vec();
        let cfg = CycleConfig {
            lambda_reconstruct: 0.0,
            trainable: false,
            force_localize: true,
            localizer_words: Some(targets),
            pad_token: vocab.pad,
            ..CycleConfig::default()
        };
        let out = cyclical_forward(&view, &caption.tokens, groundable, params, &cfg, None)?;
        ce_sum += out.decode_loss_value() * out.decode_terms as f64;
        ce_terms += out.decode_terms;
        for &(pos, region) in &caption.alignments {
            let step = &out.traces[pos - 1];
            annotated += 1;
            let dec_case = AttentionCase {
                picked_region: step.attended_region,
                aligned_region: region,
            };
            if attention_hit(&dec_case, &scene.boxes) {
                decoder_hits += 1;
            }
            let loc_case = AttentionCase {
                picked_region: step.localized_region.expect("localizer forced on"),
                aligned_region: region,
            };
            if attention_hit(&loc_case, &scene.boxes) {
                localizer_hits += 1;
            }
        }
    }

    Ok(SceneEval {
        counts,
        candidate: gen.words(),
        references: scene
            .captions
            .iter()
            .map(|c| c.content_tokens(vocab))
            .collect(),
        prediction: PredictionRecord {
            scene_id: scene.id,
            tokens,
            attended_boxes,
        },
        decoder_hits,
        localizer_hits,
        annotated,
        ce_sum,
        ce_terms,
    })
}

/// Evaluates `params` on a split: greedy captions scored for grounding F1
/// and BLEU, plus teacher-forced attention accuracy and decode loss.
pub fn evaluate_split(
    dataset: &Dataset,
    split: &str,
    params: &ModelParams,
    max_len: usize,
) -> Result<EvalOutcome> {
    let scenes = dataset.split(split)?;
    if scenes.is_empty() {
        return Err(Error::data(format!("split {split} is empty")));
    }
    let vocab = &dataset.vocab;
    let groundable = groundable_mask(vocab);
    let gen_len = max_generation_len(dataset, max_len);
    let results = par_map(scenes, |scene| {
        eval_scene(scene, params, vocab, &groundable, gen_len)
    });
    let mut evals = Vec::with_capacity(results.len());
    let mut candidates = Vec::with_capacity(results.len());
    let mut references = Vec::with_capacity(results.len());
    let mut predictions = Vec::with_capacity(results.len());
    let (mut dec_hits, mut loc_hits, mut annotated) = (0usize, 0usize, 0usize);
    let mut ce_sum = 0.0;
    let mut ce_terms = 0usize;
    for r in results {
        let r = r?;
        evals.push(r.counts);
        candidates.push(r.candidate);
        references.push(r.references);
        predictions.push(r.prediction);
        dec_hits += r.decoder_hits;
        loc_hits += r.localizer_hits;
        annotated += r.annotated;
        ce_sum += r.ce_sum;
        ce_terms += r.ce_terms;
    }

    let report = build_report(
        &evals,
        &candidates,
        &references,
        dataset,
        Some((dec_hits, loc_hits, annotated)),
    )?;
    Ok(EvalOutcome {
        report,
        val_loss: if ce_terms == 0 {
            0.0
        } else {
            ce_sum / ce_terms as f64
        },
        predictions,
    })
}

fn max_generation_len(dataset: &Dataset, requested: usize) -> usize {
    // Never below the longest reference caption so BLEU is not brevity
    // penalized by a truncation artifact.
    let longest = dataset
        .train
        .iter()
        .chain(&dataset.val)
        .chain(&dataset.test)
        .flat_map(|s| s.captions.iter())
        .map(|c| c.tokens.len())
        .max()
        .unwrap_or(0);
    requested.max(longest)
}

fn build_report(
    evals: &[SentenceEval],
    candidates: &[Vec<usize>],
    references: &[Vec<Vec<usize>>],
    dataset: &Dataset,
    attention: Option<(usize, usize, usize)>,
) -> Result<GroundingReport> {
    let vocab = &dataset.vocab;
    let (per_class, macro_f1_all, macro_f1_loc) =
        f1_per_class(evals, dataset.spec.num_classes, |w| vocab.class_of_word(w));
    let (f1_all_per_sent, f1_loc_per_sent) = f1_per_sentence(evals);
    let scores = bleu(candidates, references, 4)?;
    let (attention_accuracy_decoder, attention_accuracy_localizer) = match attention {
        Some((dec, loc, annotated)) => {
            let denom = annotated.max(1) as f64;
            (Some(dec as f64 / denom), Some(loc as f64 / denom))
        }
        None => (None, None),
    };
    let report = GroundingReport {
        sentences: evals.len(),
        per_class,
        macro_f1_all,
        macro_f1_loc,
        f1_all_per_sent,
        f1_loc_per_sent,
        bleu1: scores[0],
        bleu4: scores[3],
        attention_accuracy_decoder,
        attention_accuracy_localizer,
    };
    report.validate()?;
    Ok(report)
}

/// Scores externally produced predictions against a split. Attention
/// accuracies are not reported because interchange records carry no
/// attention internals.
pub fn score_predictions(
    records: &[PredictionRecord],
    dataset: &Dataset,
    split: &str,
) -> Result<GroundingReport> {
    let scenes = dataset.split(split)?;
    if records.is_empty() {
        return Err(Error::data("no prediction records to score"));
    }
    let vocab = &dataset.vocab;
    let mut evals = Vec::with_capacity(records.len());
    let mut candidates = Vec::with_capacity(records.len());
    let mut references = Vec::with_capacity(records.len());
    for rec in records {
        rec.validate()?;
        let scene = scenes.get(rec.scene_id).ok_or_else(|| {
            Error::data(format!(
                "prediction references scene {} but split {split} has {} scenes",
                rec.scene_id,
                scenes.len()
            ))
        })?;
        if let Some(&bad) = rec.tokens.iter().find(|&&t| t >= vocab.size()) {
            return Err(Error::data(format!(
                "prediction for scene {} has out-of-vocabulary token {bad}",
                rec.scene_id
            )));
        }
        let mut preds = Vec::new();
        for (tok, bx) in rec.tokens.iter().zip(&rec.attended_boxes) {
            if vocab.is_object_word(*tok) {
                preds.push(PredictedObject {
                    word: *tok,
                    attended: *bx,
                });
            }
        }
        let pool = scene_pool(scene);
        evals.push(sentence_counts(&preds, &pool));
        candidates.push(rec.tokens.clone());
        references.push(
            scene
                .captions
                .iter()
                .map(|c| c.content_tokens(vocab))
                .collect(),
        );
    }
    build_report(&evals, &candidates, &references, dataset, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Box4;
    use crate::model::{LocalizerVariant, ModelDims, ModelParams};
    use crate::rng::Rng;
    use crate::synthdata::WorldSpec;

    fn tiny_dataset() -> Dataset {
        let spec = WorldSpec {
            seed: 5,
            train_scenes: 6,
            val_scenes: 4,
            test_scenes: 3,
            scene_regions: 5,
            num_classes: 6,
            class_embed_dim: 8,
            ..WorldSpec::default()
        };
        crate::synthdata::generate(&spec).unwrap()
    }

    fn tiny_params(dataset: &Dataset) -> ModelParams {
        let dims = ModelDims::for_dataset(dataset, 10, 12, 4);
        ModelParams::init(&dims, LocalizerVariant::Linear, &mut Rng::new(1)).unwrap()
    }

    #[test]
    fn pool_covers_every_alignment() {
        let ds = tiny_dataset();
        let scene = &ds.val[0];
        let pool = scene_pool(scene);
        let want: usize = scene.captions.iter().map(|c| c.alignments.len()).sum();
        assert_eq!(pool.len(), want);
        for entry in &pool {
            assert!(ds.vocab.is_object_word(entry.word));
        }
    }

    #[test]
    fn untrained_model_evaluates_cleanly() {
        let ds = tiny_dataset();
        let params = tiny_params(&ds);
        let out = evaluate_split(&ds, "val", &params, 12).unwrap();
        assert_eq!(out.report.sentences, 4);
        assert_eq!(out.predictions.len(), 4);
        assert!(out.val_loss > 0.0);
        out.report.validate().unwrap();
        assert!(out.report.attention_accuracy_decoder.is_some());
        assert!(out.report.attention_accuracy_localizer.is_some());
        for p in &out.predictions {
            assert_eq!(p.tokens.len(), p.attended_boxes.len());
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let ds = tiny_dataset();
        let params = tiny_params(&ds);
        let a = evaluate_split(&ds, "val", &params, 12).unwrap();
        let b = evaluate_split(&ds, "val", &params, 12).unwrap();
        assert_eq!(a.val_loss.to_bits(), b.val_loss.to_bits());
        assert_eq!(a.report.to_csv(), b.report.to_csv());
        assert_eq!(a.predictions, b.predictions);
    }

    #[test]
    fn reference_predictions_score_perfectly() {
        // Feed the references themselves with the aligned boxes: every
        // grounding score reaches 1 and BLEU-1 is 1.
        let ds = tiny_dataset();
        let scenes = &ds.val;
        let records: Vec<PredictionRecord> = scenes
            .iter()
            .map(|scene| {
                let caption = &scene.captions[0];
                let content = caption.content_tokens(&ds.vocab);
                // Positions shift by one when BOS is stripped.
                let mut boxes: Vec<Option<Box4>> = vec![None; content.len()];
                for &(pos, region) in &caption.alignments {
                    boxes[pos - 1] = Some(scene.boxes[region]);
                }
                PredictionRecord {
                    scene_id: scene.id,
                    tokens: content,
                    attended_boxes: boxes,
                }
            })
            .collect();
        let report = score_predictions(&records, &ds, "val").unwrap();
        assert!(report.f1_all_per_sent > 0.0);
        assert_eq!(report.f1_loc_per_sent, 1.0);
        assert!(report.bleu1 > 0.99);
        assert!(report.attention_accuracy_decoder.is_none());
        // One caption cannot cover the scene's whole pool, so recall (and
        // with it F1_all) may dip below one while matched precision stays
        // perfect.
        for c in &report.per_class {
            assert!(c.prec_loc == 0.0 || c.prec_loc == 1.0);
        }
    }

    #[test]
    fn bad_scene_id_is_rejected() {
        let ds = tiny_dataset();
        let rec = PredictionRecord {
            scene_id: 999,
            tokens: vec![],
            attended_boxes: vec![],
        };
        assert!(score_predictions(&[rec], &ds, "val").is_err());
    }
}
