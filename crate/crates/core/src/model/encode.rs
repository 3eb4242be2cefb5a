//! Scene input encoding: raw region features to the attended feature bank.

use crate::error::{Error, Result};
use crate::metrics::Box4;
use crate::model::params::ParamNodes;
use crate::numcore::{Graph, NodeId, Tensor};

/// Borrowed view of one scene's model inputs.
#[derive(Clone, Copy, Debug)]
pub struct SceneView<'a> {
    /// Raw region features, `n` rows of length `feature_dim`.
    pub features: &'a [Vec<f64>],
    /// One box per region, `[x1, y1, x2, y2]`.
    pub boxes: &'a [Box4],
}

impl<'a> SceneView<'a> {
    pub fn regions(&self) -> usize {
        self.features.len()
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::data("scene has no regions"));
        }
        if self.features.len() != self.boxes.len() {
            return Err(Error::data(format!(
                "scene has {} feature rows but {} boxes",
                self.features.len(),
                self.boxes.len()
            )));
        }
        for row in self.features {
            if row.len() != feature_dim {
                return Err(Error::data(format!(
                    "region feature has length {} but the model expects {feature_dim}",
                    row.len()
                )));
            }
        }
        Ok(())
    }
}

/// Encoded scene: per-region feature bank plus its mean.
#[derive(Clone, Copy, Debug)]
pub struct EncodedScene {
    /// `region_dim x n` matrix, one column per region.
    pub bank: NodeId,
    /// Mean of the encoded columns, length `region_dim`.
    pub global: NodeId,
    pub regions: usize,
}

/// Builds each region's encoding `[raw ; class_sim ; box_proj]` where
/// `class_sim` is a softmax over per-class similarity scores and `box_proj`
/// is a learned projection of the box coordinates, then stacks the columns
/// and takes their mean as the global feature.
pub fn encode_scene(g: &mut Graph, nodes: &ParamNodes, scene: &SceneView<'_>) -> EncodedScene {
    let n = scene.regions();
    let mut cols = Vec::with_capacity(n);
    for (row, bx) in scene.features.iter().zip(scene.boxes) {
        let raw = g.constant(Tensor::vector(row.clone()));
        let class_scores = g.mattvec(nodes.w_c, raw);
        let class_sim = g.softmax(class_scores);
        let box_in = g.constant(Tensor::vector(bx.to_vec()));
        let box_proj = g.matvec(nodes.w_loc, box_in);
        cols.push(g.concat(&[raw, class_sim, box_proj]));
    }
    let bank = g.hstack(&cols);
    let mean_weights = g.constant(Tensor::vector(vec![1.0 / n as f64; n]));
    let global = g.matvec(bank, mean_weights);
    EncodedScene {
        bank,
        global,
        regions: n,
    }
}
