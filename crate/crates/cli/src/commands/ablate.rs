//! `ablate`: train a grid of configurations and tabulate the results.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use cycleground::metrics::evaluate_split;
use cycleground::synthdata::load_dataset;
use cycleground::training::TrainConfig;

use super::manifest::{self, RunManifest};
use super::train::train_into_dir;

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Dataset directory from `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON array of cells; each cell is a partial training config laid
    /// over the base config.
    #[arg(long)]
    pub grid: PathBuf,
    /// Base training config JSON; omitted fields take their defaults.
    #[arg(long)]
    pub base_config: Option<PathBuf>,
    /// Output directory: one subdirectory per cell plus the tables.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overwrite outputs from an earlier run.
    #[arg(long)]
    pub force: bool,
    /// One progress line per epoch on stderr.
    #[arg(long)]
    pub progress: bool,
}

struct CellResult {
    cell: usize,
    cfg: TrainConfig,
    outcome: Result<CellMetrics, String>,
}

struct CellMetrics {
    epochs: usize,
    best_val_loss: f64,
    best_epoch: usize,
    bleu1: f64,
    bleu4: f64,
    macro_f1_all: f64,
    macro_f1_loc: f64,
    f1_all_per_sent: f64,
    f1_loc_per_sent: f64,
    attention_decoder: f64,
    attention_localizer: f64,
}

/// Lays `overlay` keys over `base` and parses the result strictly, so a
/// typo in a cell fails with the cell's index attached.
fn merge_cell(base: &serde_json::Value, overlay: &serde_json::Value, cell: usize) -> Result<TrainConfig> {
    let obj = overlay.as_object().ok_or_else(|| {
        cycleground::Error::config(format!("grid cell {cell} is not a JSON object"))
    })?;
    let mut merged = base.clone();
    let target = merged
        .as_object_mut()
        .expect("base config serializes to an object");
    for (k, v) in obj {
        target.insert(k.clone(), v.clone());
    }
    let cfg: TrainConfig = serde_json::from_value(merged).map_err(|e| {
        cycleground::Error::config(format!("grid cell {cell}: {e}"))
    })?;
    cfg.validate()
        .map_err(|e| cycleground::Error::config(format!("grid cell {cell}: {e}")))?;
    Ok(cfg)
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

const RUNS_HEADER: &str = "cell,status,lambda_decode,lambda_reconstruct,attention_consistency,\
     word_filter,localizer,dropout,seed,epochs,best_val_loss,best_epoch,test_bleu1,test_bleu4,\
     test_macro_f1_all,test_macro_f1_loc,test_f1_all_per_sent,test_f1_loc_per_sent,\
     test_attention_decoder,test_attention_localizer,error";

fn runs_csv(rows: &[&CellResult]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in rows {
        let c = &r.cfg;
        let head = format!(
            "{},{},{:?},{:?},{:?},{},{},{:?},{}",
            r.cell,
            if r.outcome.is_ok() { "ok" } else { "failed" },
            c.lambda_decode,
            c.lambda_reconstruct,
            c.attention_consistency,
            c.word_filter.name(),
            c.localizer_variant.name(),
            c.dropout,
            c.seed,
        );
        match &r.outcome {
            Ok(m) => out.push_str(&format!(
                "{head},{},{:?},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},\n",
                m.epochs,
                m.best_val_loss,
                m.best_epoch,
                m.bleu1,
                m.bleu4,
                m.macro_f1_all,
                m.macro_f1_loc,
                m.f1_all_per_sent,
                m.f1_loc_per_sent,
                m.attention_decoder,
                m.attention_localizer,
            )),
            Err(msg) => out.push_str(&format!(
                "{head},,,,,,,,,,,{}\n",
                csv_quote(msg)
            )),
        }
    }
    out
}

/// Group key: everything that identifies a configuration except the seed.
fn group_key(c: &TrainConfig) -> (u64, u64, u64, &'static str, &'static str, u64) {
    (
        c.lambda_decode.to_bits(),
        c.lambda_reconstruct.to_bits(),
        c.attention_consistency.to_bits(),
        c.word_filter.name(),
        c.localizer_variant.name(),
        c.dropout.to_bits(),
    )
}

fn summary_csv(rows: &[&CellResult]) -> String {
    let mut out = String::from(
        "lambda_decode,lambda_reconstruct,attention_consistency,word_filter,localizer,dropout,\
         seeds,mean_best_val_loss,mean_test_bleu1,mean_test_macro_f1_all,mean_test_macro_f1_loc,\
         mean_test_f1_loc_per_sent,mean_test_attention_decoder,mean_test_attention_localizer\n",
    );
    let mut groups: Vec<(&CellResult, Vec<&CellMetrics>)> = Vec::new();
    for r in rows {
        let Ok(m) = &r.outcome else { continue };
        match groups
            .iter_mut()
            .find(|(g, _)| group_key(&g.cfg) == group_key(&r.cfg))
        {
            Some((_, ms)) => ms.push(m),
            None => groups.push((r, vec![m])),
        }
    }
    for (rep, ms) in groups {
        let n = ms.len() as f64;
        let mean = |f: fn(&CellMetrics) -> f64| ms.iter().map(|m| f(m)).sum::<f64>() / n;
        let c = &rep.cfg;
        out.push_str(&format!(
            "{:?},{:?},{:?},{},{},{:?},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            c.lambda_decode,
            c.lambda_reconstruct,
            c.attention_consistency,
            c.word_filter.name(),
            c.localizer_variant.name(),
            c.dropout,
            ms.len(),
            mean(|m| m.best_val_loss),
            mean(|m| m.bleu1),
            mean(|m| m.macro_f1_all),
            mean(|m| m.macro_f1_loc),
            mean(|m| m.f1_loc_per_sent),
            mean(|m| m.attention_decoder),
            mean(|m| m.attention_localizer),
        ));
    }
    out
}

pub fn run(args: &AblateArgs) -> Result<()> {
    let started = Instant::now();
    let base: TrainConfig = match &args.base_config {
        Some(path) => manifest::load_config_json(path)?,
        None => TrainConfig::default(),
    };
    base.validate()?;
    let base_value = serde_json::to_value(&base)?;
    let grid: Vec<serde_json::Value> = manifest::load_config_json(&args.grid)?;
    if grid.is_empty() {
        anyhow::bail!(cycleground::Error::config("grid holds no cells"));
    }
    // Reject malformed cells before any training time is spent.
    let configs: Vec<TrainConfig> = grid
        .iter()
        .enumerate()
        .map(|(i, overlay)| merge_cell(&base_value, overlay, i))
        .collect::<Result<_>>()?;

    let dataset = load_dataset(&args.data)?;
    let dataset_hash = manifest::hash_dataset_dir(&args.data)?;
    manifest::prepare_out_dir(&args.out_dir, args.force)?;

    let mut results: Vec<CellResult> = Vec::with_capacity(configs.len());
    for (i, cfg) in configs.into_iter().enumerate() {
        let cell_dir = args.out_dir.join(format!("cell_{i:03}"));
        fs::create_dir_all(&cell_dir)
            .with_context(|| format!("creating {}", cell_dir.display()))?;
        eprintln!(
            "cell {i}: l1 {} l2 {} ac {} filter {} localizer {} seed {}",
            cfg.lambda_decode,
            cfg.lambda_reconstruct,
            cfg.attention_consistency,
            cfg.word_filter.name(),
            cfg.localizer_variant.name(),
            cfg.seed,
        );
        let outcome = (|| -> Result<CellMetrics> {
            let trainer = train_into_dir(&dataset, cfg.clone(), &cell_dir, args.progress)?;
            let best = trainer.best().expect("epochs ran");
            let test = evaluate_split(
                &dataset,
                "test",
                trainer.best_params(),
                cfg.max_generate_len,
            )?;
            Ok(CellMetrics {
                epochs: trainer.epochs_run(),
                best_val_loss: best.val_loss,
                best_epoch: best.epoch,
                bleu1: test.report.bleu1,
                bleu4: test.report.bleu4,
                macro_f1_all: test.report.macro_f1_all,
                macro_f1_loc: test.report.macro_f1_loc,
                f1_all_per_sent: test.report.f1_all_per_sent,
                f1_loc_per_sent: test.report.f1_loc_per_sent,
                attention_decoder: test
                    .report
                    .attention_accuracy_decoder
                    .expect("model evaluation measures decoder attention"),
                attention_localizer: test
                    .report
                    .attention_accuracy_localizer
                    .expect("model evaluation measures localizer attention"),
            })
        })();
        let outcome = outcome.map_err(|e| {
            eprintln!("cell {i} failed: {e:#}");
            format!("{e:#}")
        });
        results.push(CellResult {
            cell: i,
            cfg,
            outcome,
        });
    }

    let mut sorted: Vec<&CellResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        a.cfg
            .lambda_decode
            .total_cmp(&b.cfg.lambda_decode)
            .then(a.cfg.lambda_reconstruct.total_cmp(&b.cfg.lambda_reconstruct))
            .then(a.cfg.seed.cmp(&b.cfg.seed))
            .then(a.cell.cmp(&b.cell))
    });
    fs::write(args.out_dir.join("runs.csv"), runs_csv(&sorted))?;
    fs::write(args.out_dir.join("summary.csv"), summary_csv(&sorted))?;

    let failed = results.iter().filter(|r| r.outcome.is_err()).count();
    let mut run = RunManifest::new("ablate");
    run.config = serde_json::json!({
        "base": base_value,
        "grid": grid,
        "cells": results.len(),
        "failed": failed,
    });
    run.dataset_sha256 = Some(dataset_hash);
    run.outputs = vec!["runs.csv".into(), "summary.csv".into()];
    for r in &results {
        run.outputs.push(format!("cell_{:03}", r.cell));
    }
    run.wall_seconds = started.elapsed().as_secs_f64();
    run.write(&args.out_dir.join("manifest.json"))?;

    println!(
        "ran {} cells in {:.1}s ({} failed); wrote {}",
        results.len(),
        run.wall_seconds,
        failed,
        args.out_dir.display()
    );
    Ok(())
}
