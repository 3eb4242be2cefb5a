//! Caption decoder and the three-stage decode/localize/reconstruct pass.

use crate::error::{Error, Result};
use crate::model::encode::{encode_scene, EncodedScene, SceneView};
use crate::model::localizer::localize;
use crate::model::lstm::lstm_step;
use crate::model::params::{ModelParams, ParamNodes};
use crate::numcore::{Graph, NodeId, Tensor};
use crate::rng::Rng;

/// Per-example forward-pass configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleConfig {
    /// Weight on the decode cross-entropy.
    pub lambda_decode: f64,
    /// Weight on the reconstruction cross-entropy. Zero skips the localize
    /// and reconstruct stages entirely.
    pub lambda_reconstruct: f64,
    /// Weight on the KL term pulling decoder attention toward the localizer
    /// distribution. Zero disables the term.
    pub attention_weight: f64,
    /// Only count reconstruction loss at steps whose target is groundable.
    pub zero_loss: bool,
    /// Feed a zero region vector to the reconstructor at steps whose
    /// localized word is not groundable.
    pub zero_representation: bool,
    /// Word-embedding dropout probability (inverted scaling, train only).
    pub dropout: f64,
    /// Track gradients for the parameters.
    pub trainable: bool,
    /// Token id excluded from loss terms.
    pub pad_token: usize,
    /// Run the localizer even when nothing else needs it (evaluation).
    pub force_localize: bool,
    /// Replace the localizer's word inputs (one per step). Defaults to the
    /// decoder's own argmax predictions.
    pub localizer_words: Option<Vec<usize>>,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            lambda_decode: 0.5,
            lambda_reconstruct: 0.5,
            attention_weight: 0.0,
            zero_loss: false,
            zero_representation: false,
            dropout: 0.0,
            trainable: true,
            pad_token: 0,
            force_localize: false,
            localizer_words: None,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_decode", self.lambda_decode),
            ("lambda_reconstruct", self.lambda_reconstruct),
            ("attention_weight", self.attention_weight),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !self.dropout.is_finite() || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    fn runs_localizer(&self) -> bool {
        self.lambda_reconstruct > 0.0
            || self.attention_weight > 0.0
            || self.force_localize
            || self.localizer_words.is_some()
    }

    fn runs_reconstruction(&self) -> bool {
        self.lambda_reconstruct > 0.0
    }
}

/// Everything recorded about one decode step.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub t: usize,
    /// Argmax of the decode logits.
    pub word_pred: usize,
    /// Decoder attention over regions.
    pub alpha: Vec<f64>,
    pub attended_region: usize,
    /// Word the localizer was queried with, when it ran.
    pub localized_word: Option<usize>,
    /// Localizer distribution over regions, when it ran.
    pub beta: Option<Vec<f64>>,
    pub localized_region: Option<usize>,
    pub alpha_node: NodeId,
    pub beta_node: Option<NodeId>,
    pub logits_decode: NodeId,
    pub logits_reconstruct: Option<NodeId>,
    /// Attention-LSTM hidden state after this step.
    pub h_a: NodeId,
}

/// Result of one three-stage pass: the graph, per-step traces, and the
/// unweighted loss heads.
pub struct CycleOutput {
    pub graph: Graph,
    pub params: ParamNodes,
    pub traces: Vec<StepTrace>,
    /// Decode cross-entropy, averaged over unmasked steps.
    pub loss_decode: NodeId,
    /// Reconstruction cross-entropy averaged over its own included steps;
    /// absent when the stage was skipped or every step was masked out.
    pub loss_reconstruct: Option<NodeId>,
    /// Sum over steps of KL(localizer beta, detached, against alpha).
    pub loss_attention: Option<NodeId>,
    pub decode_terms: usize,
    pub reconstruct_terms: usize,
}

impl CycleOutput {
    pub fn decode_loss_value(&self) -> f64 {
        self.graph.value(self.loss_decode).data()[0]
    }

    pub fn reconstruct_loss_value(&self) -> f64 {
        self.loss_reconstruct
            .map_or(0.0, |n| self.graph.value(n).data()[0])
    }

    pub fn attention_loss_value(&self) -> f64 {
        self.loss_attention
            .map_or(0.0, |n| self.graph.value(n).data()[0])
    }
}

/// Attention-LSTM input step: embeds the previous word and advances the
/// first recurrence on `[global ; previous language hidden ; embedding]`.
pub fn attention_step(
    g: &mut Graph,
    nodes: &ParamNodes,
    global: NodeId,
    h_l_prev: NodeId,
    embed: NodeId,
    h_a_prev: NodeId,
    c_a_prev: NodeId,
) -> (NodeId, NodeId) {
    let x = g.concat(&[global, h_l_prev, embed]);
    lstm_step(g, nodes.attn_w, nodes.attn_b, x, h_a_prev, c_a_prev, nodes.hidden)
}

/// Additive soft attention over the region bank: scores each column of
/// `bank` shifted by a projection of `h_a`, softmaxes, and pools.
pub fn soft_attention(
    g: &mut Graph,
    nodes: &ParamNodes,
    bank: NodeId,
    h_a: NodeId,
) -> (NodeId, NodeId) {
    let wh = g.matvec(nodes.w_a, h_a);
    let shifted = g.add_col_broadcast(bank, wh);
    let act = g.tanh(shifted);
    let scores = g.mattvec(act, nodes.w_aa);
    let alpha = g.softmax(scores);
    let r_hat = g.matvec(bank, alpha);
    (alpha, r_hat)
}

/// Language-LSTM step on `[region ; attention hidden]`, returning the new
/// state and the vocabulary logits.
pub fn language_step(
    g: &mut Graph,
    nodes: &ParamNodes,
    region: NodeId,
    h_a: NodeId,
    h_l_prev: NodeId,
    c_l_prev: NodeId,
) -> (NodeId, NodeId, NodeId) {
    let x = g.concat(&[region, h_a]);
    let (h_l, c_l) = lstm_step(g, nodes.lang_w, nodes.lang_b, x, h_l_prev, c_l_prev, nodes.hidden);
    let logits = g.matvec(nodes.w_o, h_l);
    (h_l, c_l, logits)
}

fn argmax(vals: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in vals.iter().enumerate().skip(1) {
        if v > vals[best] {
            best = k;
        }
    }
    best
}

fn dropout_mask(g: &mut Graph, rng: &mut Rng, len: usize, p: f64) -> NodeId {
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..len)
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    g.constant(Tensor::vector(mask))
}

struct EmbedCtx<'r> {
    rng: Option<&'r mut Rng>,
    p: f64,
}

impl EmbedCtx<'_> {
    fn embed(&mut self, g: &mut Graph, nodes: &ParamNodes, word: usize, embed_dim: usize) -> NodeId {
        let e = g.row(nodes.w_e, word);
        match self.rng.as_deref_mut() {
            Some(rng) if self.p > 0.0 => {
                let mask = dropout_mask(g, rng, embed_dim, self.p);
                g.mul(e, mask)
            }
            _ => e,
        }
    }
}

/// Runs the full pass on one captioned scene.
///
/// Stage 1 decodes the caption under teacher forcing and records soft
/// attention. Stage 2 re-grounds each decoded word with the localizer.
/// Stage 3 reruns the decoder from fresh zero states, replacing each step's
/// attended region with the localized one, and scores the same targets.
/// All three stages reuse one set of bound parameters, so stage-3 gradients
/// land on the same weights the decoder trains.
///
/// `groundable` flags each vocabulary id (not each position) as a content
/// word for the zero-loss and zero-representation options.
///
/// Dropout draws, when enabled, consume the RNG in a fixed order: stage-1
/// masks for steps `0..T`, then stage-3 masks for steps `0..T`.
pub fn cyclical_forward(
    scene: &SceneView<'_>,
    tokens: &[usize],
    groundable: &[bool],
    params: &ModelParams,
    cfg: &CycleConfig,
    dropout_rng: Option<&mut Rng>,
) -> Result<CycleOutput> {
    cfg.validate()?;
    let dims = &params.dims;
    scene.validate(dims.feature_dim)?;
    if tokens.len() < 2 {
        return Err(Error::data(format!(
            "caption needs at least two tokens, got {}",
            tokens.len()
        )));
    }
    if let Some(&bad) = tokens.iter().find(|&&w| w >= dims.vocab_size) {
        return Err(Error::data(format!(
            "token id {bad} is outside the vocabulary of size {}",
            dims.vocab_size
        )));
    }
    if groundable.len() != dims.vocab_size {
        return Err(Error::config(format!(
            "groundable mask has length {} but the vocabulary has {} entries",
            groundable.len(),
            dims.vocab_size
        )));
    }
    let steps = tokens.len() - 1;
    if let Some(words) = &cfg.localizer_words {
        if words.len() != steps {
            return Err(Error::config(format!(
                "localizer_words has {} entries for {steps} steps",
                words.len()
            )));
        }
        if let Some(&bad) = words.iter().find(|&&w| w >= dims.vocab_size) {
            return Err(Error::config(format!(
                "localizer word id {bad} is outside the vocabulary"
            )));
        }
    }
    if cfg.dropout > 0.0 && cfg.trainable && dropout_rng.is_none() {
        return Err(Error::config("dropout needs an RNG"));
    }

    let mut ctx = EmbedCtx {
        rng: dropout_rng,
        p: if cfg.trainable { cfg.dropout } else { 0.0 },
    };
    let mut g = Graph::new();
    let nodes = params.bind(&mut g, cfg.trainable);
    let enc = encode_scene(&mut g, &nodes, scene);
    let zero_h = g.constant(Tensor::zeros_vector(dims.hidden));

    // Stage 1: teacher-forced decode with soft attention.
    let (mut h_a, mut c_a, mut h_l, mut c_l) = (zero_h, zero_h, zero_h, zero_h);
    let mut traces = Vec::with_capacity(steps);
    let mut decode_ces = Vec::with_capacity(steps);
    for t in 0..steps {
        let e_prev = ctx.embed(&mut g, &nodes, tokens[t], dims.embed);
        let (ha, ca) = attention_step(&mut g, &nodes, enc.global, h_l, e_prev, h_a, c_a);
        h_a = ha;
        c_a = ca;
        let (alpha, r_hat) = soft_attention(&mut g, &nodes, enc.bank, h_a);
        let (hl, cl, logits) = language_step(&mut g, &nodes, r_hat, h_a, h_l, c_l);
        h_l = hl;
        c_l = cl;
        let alpha_vals = g.value(alpha).data().to_vec();
        let word_pred = argmax(g.value(logits).data());
        if tokens[t + 1] != cfg.pad_token {
            decode_ces.push(g.cross_entropy_logits(logits, tokens[t + 1]));
        }
        traces.push(StepTrace {
            t,
            word_pred,
            attended_region: argmax(&alpha_vals),
            alpha: alpha_vals,
            localized_word: None,
            beta: None,
            localized_region: None,
            alpha_node: alpha,
            beta_node: None,
            logits_decode: logits,
            logits_reconstruct: None,
            h_a,
        });
    }
    if decode_ces.is_empty() {
        return Err(Error::data("caption has no unmasked targets"));
    }
    let decode_terms = decode_ces.len();
    let decode_sum = g.sum_scalars(&decode_ces);
    let loss_decode = g.scale(decode_sum, 1.0 / decode_terms as f64);

    // Stage 2: localize each decoded (or overridden) word against the bank.
    let mut reconstruct_terms = 0;
    let mut loss_reconstruct = None;
    let mut loss_attention = None;
    if cfg.runs_localizer() {
        let words: Vec<usize> = match &cfg.localizer_words {
            Some(w) => w.clone(),
            None => traces.iter().map(|s| s.word_pred).collect(),
        };
        let mut localized = Vec::with_capacity(steps);
        for t in 0..steps {
            let loc = localize(&mut g, &nodes, enc.bank, words[t], Some(traces[t].h_a))?;
            let beta_vals = g.value(loc.beta).data().to_vec();
            traces[t].localized_word = Some(words[t]);
            traces[t].localized_region = Some(argmax(&beta_vals));
            traces[t].beta = Some(beta_vals);
            traces[t].beta_node = Some(loc.beta);
            localized.push(loc);
        }

        if cfg.attention_weight > 0.0 {
            let mut kl_terms = Vec::with_capacity(steps);
            for t in 0..steps {
                let beta_vals = traces[t].beta.clone().expect("beta recorded above");
                kl_terms.push(g.kl_div_to_const(traces[t].alpha_node, &beta_vals));
            }
            loss_attention = Some(g.sum_scalars(&kl_terms));
        }

        // Stage 3: reconstruct the caption from the localized regions with
        // fresh recurrent state and no soft attention.
        if cfg.runs_reconstruction() {
            let zero_region = g.constant(Tensor::zeros_vector(dims.region_dim()));
            let (mut h_a3, mut c_a3, mut h_l3, mut c_l3) = (zero_h, zero_h, zero_h, zero_h);
            let mut rec_ces = Vec::with_capacity(steps);
            for t in 0..steps {
                let e_prev = ctx.embed(&mut g, &nodes, tokens[t], dims.embed);
                let (ha, ca) = attention_step(&mut g, &nodes, enc.global, h_l3, e_prev, h_a3, c_a3);
                h_a3 = ha;
                c_a3 = ca;
                let region = if cfg.zero_representation && !groundable[words[t]] {
                    zero_region
                } else {
                    localized[t].region
                };
                let (hl, cl, logits) = language_step(&mut g, &nodes, region, h_a3, h_l3, c_l3);
                h_l3 = hl;
                c_l3 = cl;
                traces[t].logits_reconstruct = Some(logits);
                let target = tokens[t + 1];
                if target != cfg.pad_token && (!cfg.zero_loss || groundable[target]) {
                    rec_ces.push(g.cross_entropy_logits(logits, target));
                }
            }
            reconstruct_terms = rec_ces.len();
            if !rec_ces.is_empty() {
                let s = g.sum_scalars(&rec_ces);
                loss_reconstruct = Some(g.scale(s, 1.0 / reconstruct_terms as f64));
            }
        }
    }

    Ok(CycleOutput {
        graph: g,
        params: nodes,
        traces,
        loss_decode,
        loss_reconstruct,
        loss_attention,
        decode_terms,
        reconstruct_terms,
    })
}

/// One emitted word during greedy decoding.
#[derive(Clone, Debug)]
pub struct GenStep {
    pub word: usize,
    pub alpha: Vec<f64>,
    pub attended_region: usize,
}

/// Greedy decode result. `steps` holds emitted content words; the end token
/// itself is not included.
#[derive(Clone, Debug)]
pub struct Generated {
    pub steps: Vec<GenStep>,
    pub ended_with_eos: bool,
}

impl Generated {
    pub fn words(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.word).collect()
    }
}

/// Greedy argmax decoding from `bos` until `eos` or `max_len` words.
pub fn generate(
    scene: &SceneView<'_>,
    params: &ModelParams,
    bos: usize,
    eos: usize,
    max_len: usize,
) -> Result<Generated> {
    let dims = &params.dims;
    scene.validate(dims.feature_dim)?;
    if bos >= dims.vocab_size || eos >= dims.vocab_size {
        return Err(Error::config("bos/eos outside the vocabulary"));
    }
    if max_len == 0 {
        return Err(Error::config("max_len must be positive"));
    }
    let mut g = Graph::new();
    let nodes = params.bind(&mut g, false);
    let enc: EncodedScene = encode_scene(&mut g, &nodes, scene);
    let zero_h = g.constant(Tensor::zeros_vector(dims.hidden));
    let (mut h_a, mut c_a, mut h_l, mut c_l) = (zero_h, zero_h, zero_h, zero_h);
    let mut prev = bos;
    let mut steps = Vec::new();
    let mut ended_with_eos = false;
    for _ in 0..max_len {
        let e_prev = g.row(nodes.w_e, prev);
        let (ha, ca) = attention_step(&mut g, &nodes, enc.global, h_l, e_prev, h_a, c_a);
        h_a = ha;
        c_a = ca;
        let (alpha, r_hat) = soft_attention(&mut g, &nodes, enc.bank, h_a);
        let (hl, cl, logits) = language_step(&mut g, &nodes, r_hat, h_a, h_l, c_l);
        h_l = hl;
        c_l = cl;
        let word = argmax(g.value(logits).data());
        if word == eos {
            ended_with_eos = true;
            break;
        }
        let alpha_vals = g.value(alpha).data().to_vec();
        steps.push(GenStep {
            word,
            attended_region: argmax(&alpha_vals),
            alpha: alpha_vals,
        });
        prev = word;
    }
    Ok(Generated {
        steps,
        ended_with_eos,
    })
}
