//! Model parameters: shapes, initialization, and graph binding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::lstm::LstmWeights;
use crate::numcore::{Graph, NodeId, Tensor};
use crate::rng::Rng;

/// Size hyperparameters. `region_dim` is the encoded per-region width:
/// raw features + class-similarity column + projected box coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub embed: usize,
    pub hidden: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub box_embed: usize,
    pub vocab_size: usize,
}

impl ModelDims {
    pub fn region_dim(&self) -> usize {
        self.feature_dim + self.num_classes + self.box_embed
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("embed", self.embed),
            ("hidden", self.hidden),
            ("feature_dim", self.feature_dim),
            ("num_classes", self.num_classes),
            ("box_embed", self.box_embed),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::config(format!("model dim {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Which scoring head the localizer uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalizerVariant {
    /// Linear map from the word embedding.
    #[serde(rename = "linear")]
    Linear,
    /// One hidden tanh layer on the word embedding.
    #[serde(rename = "mlp")]
    Mlp,
    /// Scores against the attention-LSTM hidden state instead of the word.
    /// This couples the localizer to the decode pass by construction.
    #[serde(rename = "use_ha")]
    UseHiddenA,
}

impl LocalizerVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "mlp" => Ok(Self::Mlp),
            "use_ha" => Ok(Self::UseHiddenA),
            other => Err(Error::config(format!(
                "unknown localizer variant {other:?} (expected linear, mlp, or use_ha)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Mlp => "mlp",
            Self::UseHiddenA => "use_ha",
        }
    }
}

/// Localizer weights for the selected variant. `d` is the region dim.
#[derive(Clone, Debug, PartialEq)]
pub enum LocalizerParams {
    /// `w_l: d x embed`.
    Linear { w_l: Tensor },
    /// `w_l1: embed x embed`, `w_l2: d x embed`.
    Mlp { w_l1: Tensor, w_l2: Tensor },
    /// `w_l: d x hidden`.
    UseHiddenA { w_l: Tensor },
}

impl LocalizerParams {
    pub fn variant(&self) -> LocalizerVariant {
        match self {
            Self::Linear { .. } => LocalizerVariant::Linear,
            Self::Mlp { .. } => LocalizerVariant::Mlp,
            Self::UseHiddenA { .. } => LocalizerVariant::UseHiddenA,
        }
    }
}

/// All trainable parameters.
///
/// The word embedding `w_e` is shared by the decoder input, the output of
/// no other module, and the localizer query, so gradients from both the
/// decode and localize stages land on the same matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// Word embeddings, `vocab_size x embed`.
    pub w_e: Tensor,
    /// Attention LSTM over `[global ; language hidden ; word embed]`.
    pub attn_lstm: LstmWeights,
    /// Language LSTM over `[attended region ; attention hidden]`.
    pub lang_lstm: LstmWeights,
    /// Attention projection of the hidden state, `d x hidden`.
    pub w_a: Tensor,
    /// Attention score vector, length `d`.
    pub w_aa: Tensor,
    /// Output projection to vocabulary logits, `vocab_size x hidden`.
    pub w_o: Tensor,
    pub localizer: LocalizerParams,
    /// Class-similarity projection for region encoding, `feature_dim x num_classes`.
    pub w_c: Tensor,
    /// Box-coordinate projection for region encoding, `box_embed x 4`.
    pub w_loc: Tensor,
}

fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.range_f64(-bound, bound))
        .collect();
    Tensor::matrix(rows, cols, data)
}

fn uniform_vector(rng: &mut Rng, len: usize) -> Tensor {
    let bound = 1.0 / (len as f64).sqrt();
    let data = (0..len).map(|_| rng.range_f64(-bound, bound)).collect();
    Tensor::vector(data)
}

fn lstm_init(rng: &mut Rng, hidden: usize, input: usize) -> LstmWeights {
    let w = uniform_matrix(rng, 4 * hidden, input + hidden);
    // Forget-gate bias starts at 1.0 so early cells keep their state.
    let mut b = vec![0.0; 4 * hidden];
    for v in &mut b[hidden..2 * hidden] {
        *v = 1.0;
    }
    LstmWeights {
        w,
        b: Tensor::vector(b),
    }
}

impl ModelParams {
    /// Initializes all weights uniformly in `±1/sqrt(fan_in)` (fan-in is the
    /// input width of each matrix); biases are zero except the forget gate.
    /// Draw order matches `named_tensors` order, so identical seeds give
    /// identical parameters.
    pub fn init(dims: &ModelDims, variant: LocalizerVariant, rng: &mut Rng) -> Result<Self> {
        dims.validate()?;
        let d = dims.region_dim();
        let (e, h, s) = (dims.embed, dims.hidden, dims.vocab_size);
        let w_e = uniform_matrix(rng, s, e);
        let attn_lstm = lstm_init(rng, h, d + h + e);
        let lang_lstm = lstm_init(rng, h, d + h);
        let w_a = uniform_matrix(rng, d, h);
        let w_aa = uniform_vector(rng, d);
        let w_o = uniform_matrix(rng, s, h);
        let localizer = match variant {
            LocalizerVariant::Linear => LocalizerParams::Linear {
                w_l: uniform_matrix(rng, d, e),
            },
            LocalizerVariant::Mlp => LocalizerParams::Mlp {
                w_l1: uniform_matrix(rng, e, e),
                w_l2: uniform_matrix(rng, d, e),
            },
            LocalizerVariant::UseHiddenA => LocalizerParams::UseHiddenA {
                w_l: uniform_matrix(rng, d, h),
            },
        };
        let w_c = uniform_matrix(rng, dims.feature_dim, dims.num_classes);
        let w_loc = uniform_matrix(rng, dims.box_embed, 4);
        Ok(Self {
            dims: dims.clone(),
            w_e,
            attn_lstm,
            lang_lstm,
            w_a,
            w_aa,
            w_o,
            localizer,
            w_c,
            w_loc,
        })
    }

    /// Canonical `(name, tensor)` listing. Checkpoints, the optimizer, and
    /// the gradient checker all iterate parameters in this order.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![
            ("w_e", &self.w_e),
            ("attn_lstm.w", &self.attn_lstm.w),
            ("attn_lstm.b", &self.attn_lstm.b),
            ("lang_lstm.w", &self.lang_lstm.w),
            ("lang_lstm.b", &self.lang_lstm.b),
            ("w_a", &self.w_a),
            ("w_aa", &self.w_aa),
            ("w_o", &self.w_o),
        ];
        match &self.localizer {
            LocalizerParams::Linear { w_l } | LocalizerParams::UseHiddenA { w_l } => {
                out.push(("w_l", w_l));
            }
            LocalizerParams::Mlp { w_l1, w_l2 } => {
                out.push(("w_l1", w_l1));
                out.push(("w_l2", w_l2));
            }
        }
        out.push(("w_c", &self.w_c));
        out.push(("w_loc", &self.w_loc));
        out
    }

    /// Mutable variant of `named_tensors`, same order.
    pub fn named_tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out = vec![
            ("w_e", &mut self.w_e),
            ("attn_lstm.w", &mut self.attn_lstm.w),
            ("attn_lstm.b", &mut self.attn_lstm.b),
            ("lang_lstm.w", &mut self.lang_lstm.w),
            ("lang_lstm.b", &mut self.lang_lstm.b),
            ("w_a", &mut self.w_a),
            ("w_aa", &mut self.w_aa),
            ("w_o", &mut self.w_o),
        ];
        match &mut self.localizer {
            LocalizerParams::Linear { w_l } | LocalizerParams::UseHiddenA { w_l } => {
                out.push(("w_l", w_l));
            }
            LocalizerParams::Mlp { w_l1, w_l2 } => {
                out.push(("w_l1", w_l1));
                out.push(("w_l2", w_l2));
            }
        }
        out.push(("w_c", &mut self.w_c));
        out.push(("w_loc", &mut self.w_loc));
        out
    }

    /// Inserts every tensor into `graph` as a leaf (in canonical order) and
    /// returns the node handles. `trainable` controls gradient tracking.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> ParamNodes {
        let mut insert = |t: &Tensor| graph.leaf(t.clone(), trainable);
        let w_e = insert(&self.w_e);
        let attn_w = insert(&self.attn_lstm.w);
        let attn_b = insert(&self.attn_lstm.b);
        let lang_w = insert(&self.lang_lstm.w);
        let lang_b = insert(&self.lang_lstm.b);
        let w_a = insert(&self.w_a);
        let w_aa = insert(&self.w_aa);
        let w_o = insert(&self.w_o);
        let localizer = match &self.localizer {
            LocalizerParams::Linear { w_l } => LocalizerNodes::Linear { w_l: insert(w_l) },
            LocalizerParams::Mlp { w_l1, w_l2 } => LocalizerNodes::Mlp {
                w_l1: insert(w_l1),
                w_l2: insert(w_l2),
            },
            LocalizerParams::UseHiddenA { w_l } => {
                LocalizerNodes::UseHiddenA { w_l: insert(w_l) }
            }
        };
        let w_c = insert(&self.w_c);
        let w_loc = insert(&self.w_loc);
        ParamNodes {
            hidden: self.dims.hidden,
            w_e,
            attn_w,
            attn_b,
            lang_w,
            lang_b,
            w_a,
            w_aa,
            w_o,
            localizer,
            w_c,
            w_loc,
        }
    }
}

/// Node handles for the localizer weights.
#[derive(Clone, Copy, Debug)]
pub enum LocalizerNodes {
    Linear { w_l: NodeId },
    Mlp { w_l1: NodeId, w_l2: NodeId },
    UseHiddenA { w_l: NodeId },
}

/// Graph handles for every bound parameter.
#[derive(Clone, Copy, Debug)]
pub struct ParamNodes {
    pub hidden: usize,
    pub w_e: NodeId,
    pub attn_w: NodeId,
    pub attn_b: NodeId,
    pub lang_w: NodeId,
    pub lang_b: NodeId,
    pub w_a: NodeId,
    pub w_aa: NodeId,
    pub w_o: NodeId,
    pub localizer: LocalizerNodes,
    pub w_c: NodeId,
    pub w_loc: NodeId,
}

impl ParamNodes {
    /// `(name, node)` pairs in the same canonical order as `named_tensors`.
    pub fn named(&self) -> Vec<(&'static str, NodeId)> {
        let mut out = vec![
            ("w_e", self.w_e),
            ("attn_lstm.w", self.attn_w),
            ("attn_lstm.b", self.attn_b),
            ("lang_lstm.w", self.lang_w),
            ("lang_lstm.b", self.lang_b),
            ("w_a", self.w_a),
            ("w_aa", self.w_aa),
            ("w_o", self.w_o),
        ];
        match self.localizer {
            LocalizerNodes::Linear { w_l } | LocalizerNodes::UseHiddenA { w_l } => {
                out.push(("w_l", w_l));
            }
            LocalizerNodes::Mlp { w_l1, w_l2 } => {
                out.push(("w_l1", w_l1));
                out.push(("w_l2", w_l2));
            }
        }
        out.push(("w_c", self.w_c));
        out.push(("w_loc", self.w_loc));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims {
            embed: 8,
            hidden: 8,
            feature_dim: 6,
            num_classes: 3,
            box_embed: 4,
            vocab_size: 11,
        }
    }

    #[test]
    fn init_shapes_match_contract() {
        let d = dims();
        let mut rng = Rng::new(7);
        let p = ModelParams::init(&d, LocalizerVariant::Linear, &mut rng).unwrap();
        let rd = d.region_dim();
        assert_eq!(rd, 13);
        assert_eq!(p.w_e.dims().as_list(), vec![11, 8]);
        // LSTM inputs carry their own recurrent state: cols = input + hidden.
        assert_eq!(p.attn_lstm.w.dims().as_list(), vec![32, (rd + 8 + 8) + 8]);
        assert_eq!(p.attn_lstm.b.len(), 32);
        assert_eq!(p.lang_lstm.w.dims().as_list(), vec![32, (rd + 8) + 8]);
        assert_eq!(p.w_a.dims().as_list(), vec![rd, 8]);
        assert_eq!(p.w_aa.len(), rd);
        assert_eq!(p.w_o.dims().as_list(), vec![11, 8]);
        assert_eq!(p.w_c.dims().as_list(), vec![6, 3]);
        assert_eq!(p.w_loc.dims().as_list(), vec![4, 4]);
        match &p.localizer {
            LocalizerParams::Linear { w_l } => {
                assert_eq!(w_l.dims().as_list(), vec![rd, 8]);
            }
            other => panic!("wrong variant: {other:?}"),
        }
    }

    #[test]
    fn forget_gate_bias_is_one() {
        let d = dims();
        let mut rng = Rng::new(7);
        let p = ModelParams::init(&d, LocalizerVariant::Mlp, &mut rng).unwrap();
        let h = d.hidden;
        for (k, &v) in p.attn_lstm.b.data().iter().enumerate() {
            let want = if (h..2 * h).contains(&k) { 1.0 } else { 0.0 };
            assert_eq!(v, want, "attn bias slot {k}");
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let d = dims();
        let a = ModelParams::init(&d, LocalizerVariant::Linear, &mut Rng::new(3)).unwrap();
        let b = ModelParams::init(&d, LocalizerVariant::Linear, &mut Rng::new(3)).unwrap();
        let c = ModelParams::init(&d, LocalizerVariant::Linear, &mut Rng::new(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn named_order_is_stable() {
        let d = dims();
        let p = ModelParams::init(&d, LocalizerVariant::Mlp, &mut Rng::new(1)).unwrap();
        let names: Vec<&str> = p.named_tensors().iter().map(|(n, _)| *n).collect();
        assert_eq!(
            names,
            vec![
                "w_e",
                "attn_lstm.w",
                "attn_lstm.b",
                "lang_lstm.w",
                "lang_lstm.b",
                "w_a",
                "w_aa",
                "w_o",
                "w_l1",
                "w_l2",
                "w_c",
                "w_loc"
            ]
        );
        let mut graph = Graph::new();
        let nodes = p.bind(&mut graph, true);
        let node_names: Vec<&str> = nodes.named().iter().map(|(n, _)| *n).collect();
        assert_eq!(names, node_names);
    }

    #[test]
    fn bind_respects_trainable_flag() {
        let d = dims();
        let p = ModelParams::init(&d, LocalizerVariant::Linear, &mut Rng::new(1)).unwrap();
        let mut g = Graph::new();
        let nodes = p.bind(&mut g, true);
        assert!(g.requires_grad(nodes.w_e));
        let mut g2 = Graph::new();
        let frozen = p.bind(&mut g2, false);
        assert!(!g2.requires_grad(frozen.w_e));
    }

    #[test]
    fn variant_parse_round_trip() {
        for v in [
            LocalizerVariant::Linear,
            LocalizerVariant::Mlp,
            LocalizerVariant::UseHiddenA,
        ] {
            assert_eq!(LocalizerVariant::parse(v.name()).unwrap(), v);
        }
        assert!(LocalizerVariant::parse("bogus").is_err());
    }
}
