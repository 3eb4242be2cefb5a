//! `eval`: score a checkpoint or externally produced predictions.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use cycleground::metrics::{
    evaluate_split, read_predictions, score_predictions, write_predictions, GroundingReport,
};
use cycleground::model::load_checkpoint;
use cycleground::synthdata::load_dataset;

use super::manifest::{self, RunManifest};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory from `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    /// Model checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Predictions JSONL to score instead of running a model.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Split to evaluate: train, val, or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Output directory for the report files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overwrite outputs from an earlier run.
    #[arg(long)]
    pub force: bool,
    /// Generation length cap (never below the longest reference).
    #[arg(long, default_value_t = 12)]
    pub max_generate_len: usize,
}

fn print_summary(split: &str, report: &GroundingReport, val_loss: Option<f64>) {
    println!("split {split}: {} sentences", report.sentences);
    println!("bleu1 {:.4}  bleu4 {:.4}", report.bleu1, report.bleu4);
    println!(
        "macro f1: all {:.4}  localized {:.4}",
        report.macro_f1_all, report.macro_f1_loc
    );
    println!(
        "per-sentence f1: all {:.4}  localized {:.4}",
        report.f1_all_per_sent, report.f1_loc_per_sent
    );
    if let (Some(d), Some(l)) = (
        report.attention_accuracy_decoder,
        report.attention_accuracy_localizer,
    ) {
        println!("attention accuracy: decoder {d:.4}  localizer {l:.4}");
    }
    if let Some(v) = val_loss {
        println!("teacher-forced loss {v:.4}");
    }
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    if args.checkpoint.is_some() == args.predictions.is_some() {
        bail!(cycleground::Error::config(
            "pass exactly one of --checkpoint or --predictions"
        ));
    }
    // Inputs load before the output directory exists, so a failed run
    // leaves nothing behind.
    let dataset = load_dataset(&args.data)?;
    let dataset_hash = manifest::hash_dataset_dir(&args.data)?;
    manifest::prepare_out_dir(&args.out_dir, args.force)?;

    let mut run = RunManifest::new("eval");
    run.dataset_sha256 = Some(dataset_hash);
    run.config = serde_json::json!({
        "split": args.split,
        "max_generate_len": args.max_generate_len,
        "checkpoint": args.checkpoint.as_ref().map(|p| p.display().to_string()),
        "predictions": args.predictions.as_ref().map(|p| p.display().to_string()),
    });

    let (report, val_loss) = if let Some(ckpt) = &args.checkpoint {
        let params = load_checkpoint(ckpt)?;
        let outcome = evaluate_split(&dataset, &args.split, &params, args.max_generate_len)?;
        write_predictions(&args.out_dir.join("predictions.jsonl"), &outcome.predictions)?;
        run.outputs.push("predictions.jsonl".into());
        (outcome.report, Some(outcome.val_loss))
    } else {
        let path = args.predictions.as_ref().expect("checked above");
        let records = read_predictions(path)?;
        (score_predictions(&records, &dataset, &args.split)?, None)
    };

    fs::write(args.out_dir.join("report.json"), report.to_json()?)
        .with_context(|| format!("writing report under {}", args.out_dir.display()))?;
    fs::write(args.out_dir.join("report.csv"), report.to_csv())?;
    run.outputs.push("report.json".into());
    run.outputs.push("report.csv".into());
    run.wall_seconds = started.elapsed().as_secs_f64();
    run.write(&args.out_dir.join("manifest.json"))?;

    print_summary(&args.split, &report, val_loss);
    println!("wrote {}", args.out_dir.display());
    Ok(())
}
