//! Combining per-stage losses into one training objective.

use crate::model::CycleOutput;
use crate::numcore::{NodeId, Tensor};

/// Weighted sum of the decode, reconstruction, and attention-consistency
/// losses. Terms with zero weight (or absent from the pass) are left out
/// of the graph entirely, so their parameters receive exact-zero
/// gradients rather than tiny float noise.
pub fn total_loss(
    out: &mut CycleOutput,
    lambda_decode: f64,
    lambda_reconstruct: f64,
    attention_weight: f64,
) -> NodeId {
    let mut terms: Vec<NodeId> = Vec::with_capacity(3);
    if lambda_decode != 0.0 {
        terms.push(out.graph.scale(out.loss_decode, lambda_decode));
    }
    if lambda_reconstruct != 0.0 {
        if let Some(rec) = out.loss_reconstruct {
            terms.push(out.graph.scale(rec, lambda_reconstruct));
        }
    }
    if attention_weight != 0.0 {
        if let Some(att) = out.loss_attention {
            terms.push(out.graph.scale(att, attention_weight));
        }
    }
    match terms.len() {
        0 => out.graph.constant(Tensor::vector(vec![0.0])),
        1 => terms[0],
        _ => out.graph.sum_scalars(&terms),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        cyclical_forward, groundable_mask, CycleConfig, ModelDims, ModelParams, SceneView,
    };
    use crate::rng::Rng;
    use crate::synthdata::{generate, WorldSpec};

    fn tiny_setup() -> (crate::synthdata::Dataset, ModelParams) {
        let mut spec = WorldSpec::default();
        spec.train_scenes = 2;
        spec.val_scenes = 1;
        spec.test_scenes = 1;
        let data = generate(&spec).unwrap();
        let dims = ModelDims::for_dataset(&data, 6, 8, 4);
        let params = ModelParams::init(&dims, crate::model::LocalizerVariant::Linear, &mut Rng::new(7)).unwrap();
        (data, params)
    }

    #[test]
    fn weighted_sum_matches_hand_arithmetic() {
        let (data, params) = tiny_setup();
        let scene = &data.train[0];
        let caption = &scene.captions[0];
        let view = SceneView {
            features: &scene.features,
            boxes: &scene.boxes,
        };
        let groundable = groundable_mask(&data.vocab);
        let cfg = CycleConfig {
            attention_weight: 0.3,
            ..CycleConfig::default()
        };
        let mut out =
            cyclical_forward(&view, &caption.tokens, &groundable, &params, &cfg, None).unwrap();
        let dec = out.decode_loss_value();
        let rec = out.reconstruct_loss_value();
        let att = out.attention_loss_value();
        let root = total_loss(&mut out, 0.5, 0.25, 0.3);
        let total = out.graph.value(root).data()[0];
        let expect = 0.5 * dec + 0.25 * rec + 0.3 * att;
        assert!((total - expect).abs() < 1e-12, "{total} vs {expect}");
    }

    #[test]
    fn zero_weights_drop_terms_from_the_graph() {
        let (data, params) = tiny_setup();
        let scene = &data.train[0];
        let caption = &scene.captions[0];
        let view = SceneView {
            features: &scene.features,
            boxes: &scene.boxes,
        };
        let groundable = groundable_mask(&data.vocab);
        let cfg = CycleConfig::default();
        let mut out =
            cyclical_forward(&view, &caption.tokens, &groundable, &params, &cfg, None).unwrap();
        let dec = out.decode_loss_value();
        let root = total_loss(&mut out, 1.0, 0.0, 0.0);
        assert!((out.graph.value(root).data()[0] - dec).abs() < 1e-15);
    }

    #[test]
    fn all_zero_weights_give_a_zero_constant() {
        let (data, params) = tiny_setup();
        let scene = &data.train[0];
        let caption = &scene.captions[0];
        let view = SceneView {
            features: &scene.features,
            boxes: &scene.boxes,
        };
        let groundable = groundable_mask(&data.vocab);
        let cfg = CycleConfig::default();
        let mut out =
            cyclical_forward(&view, &caption.tokens, &groundable, &params, &cfg, None).unwrap();
        let root = total_loss(&mut out, 0.0, 0.0, 0.0);
        assert_eq!(out.graph.value(root).data()[0], 0.0);
        out.graph.backward(root);
    }

    #[test]
    fn reconstruction_weight_without_stage_three_is_ignored() {
        let (data, params) = tiny_setup();
        let scene = &data.train[0];
        let caption = &scene.captions[0];
        let view = SceneView {
            features: &scene.features,
            boxes: &scene.boxes,
        };
        let groundable = groundable_mask(&data.vocab);
        let cfg = CycleConfig {
            lambda_reconstruct: 0.0,
            ..CycleConfig::default()
        };
        let mut out =
            cyclical_forward(&view, &caption.tokens, &groundable, &params, &cfg, None).unwrap();
        assert!(out.loss_reconstruct.is_none());
        let dec = out.decode_loss_value();
        let root = total_loss(&mut out, 1.0, 0.5, 0.0);
        assert!((out.graph.value(root).data()[0] - dec).abs() < 1e-15);
    }
}
