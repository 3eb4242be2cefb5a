//! `gen-data`: synthesize a dataset directory.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use cycleground::synthdata::{generate, save_dataset, WorldSpec};

use super::manifest::{self, RunManifest};

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// World spec JSON; omitted fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite an existing dataset directory.
    #[arg(long)]
    pub force: bool,
    /// Override the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the spec's train scene count.
    #[arg(long)]
    pub train_scenes: Option<usize>,
    /// Override the spec's val scene count.
    #[arg(long)]
    pub val_scenes: Option<usize>,
    /// Override the spec's test scene count.
    #[arg(long)]
    pub test_scenes: Option<usize>,
    /// Override the spec's regions per scene.
    #[arg(long)]
    pub scene_regions: Option<usize>,
    /// Override the spec's feature noise level.
    #[arg(long)]
    pub feature_noise: Option<f64>,
}

pub fn run(args: &GenDataArgs) -> Result<()> {
    let started = Instant::now();
    let mut spec: WorldSpec = match &args.spec {
        Some(path) => manifest::load_config_json(path)?,
        None => WorldSpec::default(),
    };
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.train_scenes {
        spec.train_scenes = v;
    }
    if let Some(v) = args.val_scenes {
        spec.val_scenes = v;
    }
    if let Some(v) = args.test_scenes {
        spec.test_scenes = v;
    }
    if let Some(v) = args.scene_regions {
        spec.scene_regions = v;
    }
    if let Some(v) = args.feature_noise {
        spec.feature_noise = v;
    }
    spec.validate()?;
    manifest::prepare_out_dir(&args.out, args.force)?;

    let dataset = generate(&spec)?;
    save_dataset(&dataset, &args.out)
        .with_context(|| format!("writing dataset to {}", args.out.display()))?;

    let mut run = RunManifest::new("gen-data");
    run.config = serde_json::to_value(&spec)?;
    run.seeds.insert("world".to_string(), spec.seed);
    run.dataset_sha256 = Some(manifest::hash_dataset_dir(&args.out)?);
    run.outputs = vec![
        "worldspec.json".into(),
        "vocab.json".into(),
        "train.jsonl".into(),
        "val.jsonl".into(),
        "test.jsonl".into(),
    ];
    run.wall_seconds = started.elapsed().as_secs_f64();
    run.write(&args.out.join("manifest.json"))?;

    println!(
        "wrote {} ({} train / {} val / {} test scenes, {} regions each, vocab {})",
        args.out.display(),
        dataset.train.len(),
        dataset.val.len(),
        dataset.test.len(),
        spec.scene_regions,
        dataset.vocab.size(),
    );
    Ok(())
}
