//! `train`: fit a model and save the best checkpoint plus logs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use cycleground::metrics::evaluate_split;
use cycleground::model::{save_checkpoint, LocalizerVariant};
use cycleground::synthdata::{load_dataset, Dataset};
use cycleground::training::{EpochLog, TrainConfig, Trainer, WordFilter};

use super::manifest::{self, RunManifest};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory from `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    /// Training config JSON; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for checkpoint, logs, and reports.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overwrite outputs from an earlier run.
    #[arg(long)]
    pub force: bool,
    /// One progress line per epoch on stderr.
    #[arg(long)]
    pub progress: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lambda_decode: Option<f64>,
    #[arg(long)]
    pub lambda_reconstruct: Option<f64>,
    #[arg(long)]
    pub attention_consistency: Option<f64>,
    /// none, zero_loss, or zero_representation.
    #[arg(long)]
    pub word_filter: Option<String>,
    /// linear, mlp, or use_ha.
    #[arg(long)]
    pub localizer: Option<String>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub embed: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub box_embed: Option<usize>,
    #[arg(long)]
    pub plateau_patience: Option<usize>,
    #[arg(long)]
    pub max_generate_len: Option<usize>,
}

impl TrainArgs {
    /// Config file merged with flag overrides.
    pub fn effective_config(&self) -> Result<TrainConfig> {
        let mut cfg: TrainConfig = match &self.config {
            Some(path) => manifest::load_config_json(path)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.pretrain_epochs {
            cfg.pretrain_epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.lambda_decode {
            cfg.lambda_decode = v;
        }
        if let Some(v) = self.lambda_reconstruct {
            cfg.lambda_reconstruct = v;
        }
        if let Some(v) = self.attention_consistency {
            cfg.attention_consistency = v;
        }
        if let Some(v) = &self.word_filter {
            cfg.word_filter = WordFilter::parse(v)?;
        }
        if let Some(v) = &self.localizer {
            cfg.localizer_variant = LocalizerVariant::parse(v)?;
        }
        if let Some(v) = self.dropout {
            cfg.dropout = v;
        }
        if let Some(v) = self.embed {
            cfg.embed = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden = v;
        }
        if let Some(v) = self.box_embed {
            cfg.box_embed = v;
        }
        if let Some(v) = self.plateau_patience {
            cfg.plateau_patience = v;
        }
        if let Some(v) = self.max_generate_len {
            cfg.max_generate_len = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn progress_line(row: &EpochLog, max_epochs: usize) {
    eprintln!(
        "epoch {:>4}/{} {:<6} lr {:<8} train {:.4} val {:.4} bleu1 {:.3} f1loc {:.3} attn d {:.3} l {:.3}",
        row.epoch,
        max_epochs,
        row.phase,
        row.lr,
        row.train_total,
        row.val_loss,
        row.val_bleu1,
        row.val_macro_f1_loc,
        row.val_attention_decoder,
        row.val_attention_localizer,
    );
}

/// Trains on an already loaded dataset and writes every artifact into
/// `out_dir`. Returns the trainer for callers that keep going (ablation).
pub fn train_into_dir<'a>(
    dataset: &'a Dataset,
    cfg: TrainConfig,
    out_dir: &Path,
    progress: bool,
) -> Result<Trainer<'a>> {
    let mut trainer = Trainer::new(dataset, cfg)?;
    let max_epochs = trainer.config().max_epochs;
    while !trainer.done() {
        let row = trainer.run_epoch()?;
        if progress {
            progress_line(row, max_epochs);
        }
    }
    fs::write(out_dir.join("train_log.csv"), trainer.log().to_csv())
        .with_context(|| format!("writing train log under {}", out_dir.display()))?;
    save_checkpoint(trainer.best_params(), &out_dir.join("checkpoint.json"))?;
    let val = evaluate_split(
        dataset,
        "val",
        trainer.best_params(),
        trainer.config().max_generate_len,
    )?;
    fs::write(out_dir.join("val_report.json"), val.report.to_json()?)?;
    Ok(trainer)
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = args.effective_config()?;
    // Inputs load before the output directory exists, so a failed run
    // leaves nothing behind.
    let dataset = load_dataset(&args.data)?;
    let dataset_hash = manifest::hash_dataset_dir(&args.data)?;
    manifest::prepare_out_dir(&args.out_dir, args.force)?;

    let trainer = train_into_dir(&dataset, cfg.clone(), &args.out_dir, args.progress)?;
    let best = trainer
        .best()
        .expect("at least one epoch ran, so a best snapshot exists");
    let last = trainer
        .log()
        .epochs
        .last()
        .expect("at least one epoch ran");

    let mut run = RunManifest::new("train");
    run.config = serde_json::to_value(&cfg)?;
    run.seeds.insert("train".to_string(), cfg.seed);
    run.dataset_sha256 = Some(dataset_hash);
    run.outputs = vec![
        "checkpoint.json".into(),
        "train_log.csv".into(),
        "val_report.json".into(),
    ];
    run.wall_seconds = started.elapsed().as_secs_f64();
    run.write(&args.out_dir.join("manifest.json"))?;

    println!(
        "trained {} epochs in {:.1}s; best val loss {:.4} at epoch {}",
        trainer.epochs_run(),
        run.wall_seconds,
        best.val_loss,
        best.epoch,
    );
    println!(
        "final val: bleu1 {:.3} macro f1(loc) {:.3} attention decoder {:.3} localizer {:.3}",
        last.val_bleu1,
        last.val_macro_f1_loc,
        last.val_attention_decoder,
        last.val_attention_localizer,
    );
    println!("wrote {}", args.out_dir.display());
    Ok(())
}
