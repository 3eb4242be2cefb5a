//! The cyclical training loop.
//!
//! Each epoch shuffles the flattened (scene, caption) example list with a
//! seed-derived stream, walks it in fixed-size batches, and for every
//! example runs the full forward pass, builds the weighted loss, and
//! backpropagates in an arena private to that example. Per-example
//! gradients are averaged in index order (dividing the sum by the batch
//! size), clipped by global norm, and applied with ADAM. Parallel and
//! sequential builds therefore produce bitwise-identical trajectories.

use crate::error::{Error, Result};
use crate::metrics::evaluate_split;
use crate::model::{
    cyclical_forward, groundable_mask, CycleOutput, ModelDims, ModelParams, SceneView,
};
use crate::numcore::Tensor;
use crate::parallel::par_map;
use crate::rng::{Rng, STREAM_DROPOUT, STREAM_INIT, STREAM_SHUFFLE};
use crate::synthdata::Dataset;
use crate::training::adam::{adam_step, clip_global_norm, AdamState};
use crate::training::config::TrainConfig;
use crate::training::loss::total_loss;
use crate::training::schedule::PlateauSchedule;

/// One epoch's log row.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    /// "warmup" while reconstruction is disabled, then "cycle".
    pub phase: &'static str,
    /// Learning rate used for this epoch's updates.
    pub lr: f64,
    /// Mean weighted training loss per example.
    pub train_total: f64,
    /// Mean unweighted decode loss per example.
    pub train_decode: f64,
    /// Mean unweighted reconstruction loss per example.
    pub train_reconstruct: f64,
    /// Mean unweighted attention-consistency loss per example.
    pub train_attention: f64,
    /// Teacher-forced validation cross-entropy per token.
    pub val_loss: f64,
    pub val_bleu1: f64,
    pub val_macro_f1_all: f64,
    pub val_macro_f1_loc: f64,
    pub val_attention_decoder: f64,
    pub val_attention_localizer: f64,
}

/// Per-epoch rows, exportable as CSV with a fixed column set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,phase,lr,train_total,train_decode,\
         train_reconstruct,train_attention,val_loss,val_bleu1,val_macro_f1_all,\
         val_macro_f1_loc,val_attention_decoder,val_attention_localizer";

    /// CSV with one row per epoch. Floats print in shortest round-trip
    /// form, so equal logs imply bitwise-equal trajectories.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                e.epoch,
                e.phase,
                e.lr,
                e.train_total,
                e.train_decode,
                e.train_reconstruct,
                e.train_attention,
                e.val_loss,
                e.val_bleu1,
                e.val_macro_f1_all,
                e.val_macro_f1_loc,
                e.val_attention_decoder,
                e.val_attention_localizer,
            ));
        }
        out
    }
}

/// Parameters that scored the lowest validation loss so far.
#[derive(Clone, Debug)]
pub struct BestSnapshot {
    pub params: ModelParams,
    pub val_loss: f64,
    /// 1-based epoch the snapshot was taken at.
    pub epoch: usize,
}

struct ExampleResult {
    total: f64,
    decode: f64,
    reconstruct: f64,
    attention: f64,
    grads: Vec<Vec<f64>>,
}

/// Owns the model, optimizer, and schedule for one training run.
pub struct Trainer<'a> {
    dataset: &'a Dataset,
    cfg: TrainConfig,
    params: ModelParams,
    adam: AdamState,
    schedule: PlateauSchedule,
    groundable: Vec<bool>,
    /// Flattened (scene index, caption index) pairs over the train split.
    examples: Vec<(usize, usize)>,
    epochs_run: usize,
    best: Option<BestSnapshot>,
    log: TrainLog,
    shuffle_root: Rng,
    dropout_root: Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, cfg: TrainConfig) -> Result<Trainer<'a>> {
        cfg.validate()?;
        if dataset.train.is_empty() {
            return Err(Error::data("train split is empty"));
        }
        if dataset.val.is_empty() {
            return Err(Error::data("val split is empty"));
        }
        let dims = ModelDims::for_dataset(dataset, cfg.embed, cfg.hidden, cfg.box_embed);
        let root = Rng::new(cfg.seed);
        let params = ModelParams::init(
            &dims,
            cfg.localizer_variant,
            &mut root.derive(STREAM_INIT),
        )?;
        let mut examples = Vec::new();
        for (si, scene) in dataset.train.iter().enumerate() {
            for ci in 0..scene.captions.len() {
                examples.push((si, ci));
            }
        }
        if examples.is_empty() {
            return Err(Error::data("train split has no captions"));
        }
        let adam = AdamState::new(&params);
        let schedule = PlateauSchedule::new(cfg.learning_rate, cfg.plateau_patience);
        let groundable = groundable_mask(&dataset.vocab);
        Ok(Trainer {
            dataset,
            shuffle_root: root.derive(STREAM_SHUFFLE),
            dropout_root: root.derive(STREAM_DROPOUT),
            cfg,
            params,
            adam,
            schedule,
            groundable,
            examples,
            epochs_run: 0,
            best: None,
            log: TrainLog::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Model as of the latest update.
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Model with the lowest validation loss seen, or the current model
    /// before any epoch has completed.
    pub fn best_params(&self) -> &ModelParams {
        match &self.best {
            Some(b) => &b.params,
            None => &self.params,
        }
    }

    pub fn best(&self) -> Option<&BestSnapshot> {
        self.best.as_ref()
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn epochs_run(&self) -> usize {
        self.epochs_run
    }

    pub fn lr(&self) -> f64 {
        self.schedule.lr()
    }

    pub fn done(&self) -> bool {
        self.epochs_run >= self.cfg.max_epochs
    }

    /// Runs epochs until `max_epochs`.
    pub fn train(&mut self) -> Result<()> {
        while !self.done() {
            self.run_epoch()?;
        }
        Ok(())
    }

    /// One pass over the shuffled train split plus a validation pass.
    pub fn run_epoch(&mut self) -> Result<&EpochLog> {
        let epoch_index = self.epochs_run;
        let warmup = epoch_index < self.cfg.pretrain_epochs;
        let lr = self.schedule.lr();
        let cycle_cfg = self
            .cfg
            .cycle_config(warmup, self.dataset.vocab.pad);

        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        self.shuffle_root
            .derive(epoch_index as u64)
            .shuffle(&mut order);

        let mut sum_total = 0.0;
        let mut sum_decode = 0.0;
        let mut sum_reconstruct = 0.0;
        let mut sum_attention = 0.0;
        for batch in order.chunks(self.cfg.batch_size) {
            let params = &self.params;
            let dataset = self.dataset;
            let groundable = &self.groundable;
            let cfg = &self.cfg;
            let dropout_epoch = self.dropout_root.derive(epoch_index as u64);
            let cycle_cfg = &cycle_cfg;
            let results: Vec<Result<ExampleResult>> = par_map(batch, |&idx| {
                let (si, ci) = self.examples[idx];
                let scene = &dataset.train[si];
                let caption = &scene.captions[ci];
                let view = SceneView {
                    features: &scene.features,
                    boxes: &scene.boxes,
                };
                let mut dropout_rng = if cfg.dropout > 0.0 {
                    Some(dropout_epoch.derive(idx as u64))
                } else {
                    None
                };
                let mut out = cyclical_forward(
                    &view,
                    &caption.tokens,
                    groundable,
                    params,
                    cycle_cfg,
                    dropout_rng.as_mut(),
                )?;
                let root = total_loss(
                    &mut out,
                    cycle_cfg.lambda_decode,
                    cycle_cfg.lambda_reconstruct,
                    cycle_cfg.attention_weight,
                );
                out.graph.backward(root);
                Ok(ExampleResult {
                    total: out.graph.value(root).data()[0],
                    decode: out.decode_loss_value(),
                    reconstruct: out.reconstruct_loss_value(),
                    attention: out.attention_loss_value(),
                    grads: extract_grads(&out),
                })
            });

            let mut acc: Vec<Vec<f64>> = self
                .params
                .named_tensors()
                .iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect();
            for r in results {
                let r = r?;
                sum_total += r.total;
                sum_decode += r.decode;
                sum_reconstruct += r.reconstruct;
                sum_attention += r.attention;
                for (a, g) in acc.iter_mut().zip(&r.grads) {
                    for (ai, gi) in a.iter_mut().zip(g) {
                        *ai += gi;
                    }
                }
            }
            let n = batch.len() as f64;
            let mut grads: Vec<Tensor> = acc
                .into_iter()
                .zip(self.params.named_tensors())
                .map(|(mut data, (_, t))| {
                    for x in data.iter_mut() {
                        *x /= n;
                    }
                    match t.dims().as_list().as_slice() {
                        [len] => {
                            debug_assert_eq!(*len, data.len());
                            Tensor::vector(data)
                        }
                        [r, c] => Tensor::matrix(*r, *c, data),
                        _ => unreachable!("parameters are rank 1 or 2"),
                    }
                })
                .collect();
            clip_global_norm(&mut grads, self.cfg.grad_clip);
            adam_step(
                &mut self.params,
                &grads,
                &mut self.adam,
                lr,
                self.cfg.adam_beta1,
                self.cfg.adam_beta2,
                self.cfg.adam_epsilon,
            )?;
        }

        let eval = evaluate_split(
            self.dataset,
            "val",
            &self.params,
            self.cfg.max_generate_len,
        )?;
        let n_examples = self.examples.len() as f64;
        let row = EpochLog {
            epoch: epoch_index + 1,
            phase: if warmup { "warmup" } else { "cycle" },
            lr,
            train_total: sum_total / n_examples,
            train_decode: sum_decode / n_examples,
            train_reconstruct: sum_reconstruct / n_examples,
            train_attention: sum_attention / n_examples,
            val_loss: eval.val_loss,
            val_bleu1: eval.report.bleu1,
            val_macro_f1_all: eval.report.macro_f1_all,
            val_macro_f1_loc: eval.report.macro_f1_loc,
            val_attention_decoder: eval
                .report
                .attention_accuracy_decoder
                .expect("split evaluation always measures decoder attention"),
            val_attention_localizer: eval
                .report
                .attention_accuracy_localizer
                .expect("split evaluation always measures localizer attention"),
        };
        self.schedule.observe(eval.val_loss);
        let improved = self
            .best
            .as_ref()
            .map_or(true, |b| eval.val_loss < b.val_loss);
        if improved {
            self.best = Some(BestSnapshot {
                params: self.params.clone(),
                val_loss: eval.val_loss,
                epoch: epoch_index + 1,
            });
        }
        self.log.epochs.push(row);
        self.epochs_run += 1;
        Ok(self.log.epochs.last().expect("row just pushed"))
    }
}

/// Gradients of every parameter tensor in canonical order, copied out of
/// the example's arena.
fn extract_grads(out: &CycleOutput) -> Vec<Vec<f64>> {
    out.params
        .named()
        .into_iter()
        .map(|(_, node)| out.graph.grad(node).to_vec())
        .collect()
}

/// Trains a model on `dataset` and returns the trainer with its log and
/// best snapshot.
pub fn train(dataset: &Dataset, cfg: TrainConfig) -> Result<Trainer<'_>> {
    let mut trainer = Trainer::new(dataset, cfg)?;
    trainer.train()?;
    Ok(trainer)
}
