//! `gradcheck`: compare analytic gradients with central differences on a
//! small end-to-end example covering every parameter tensor.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use cycleground::model::{
    groundable_mask, LocalizerVariant, ModelDims, ModelParams, SceneView,
};
use cycleground::numcore::{GradCheckOptions, GradCheckReport};
use cycleground::rng::Rng;
use cycleground::synthdata::{generate, WorldSpec};
use cycleground::training::{check_model_gradients, GradCheckTask};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Seed for the probe scene and parameter draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step size.
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    /// Plant a 2% error into the tanh backward rule; the check must fail.
    #[arg(long)]
    pub inject_bug: bool,
    /// Also write the full reports as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

struct NamedRun {
    label: String,
    report: GradCheckReport,
}

fn print_report(run: &NamedRun) {
    println!("## {}", run.label);
    println!(
        "{:<14} {:>8} {:>8} {:>12}  status",
        "tensor", "elements", "checked", "max rel err"
    );
    for p in &run.report.params {
        println!(
            "{:<14} {:>8} {:>8} {:>12.3e}  {}",
            p.name,
            p.elements,
            p.checked,
            p.max_rel_err,
            if p.max_rel_err <= run.report.tolerance {
                "ok"
            } else {
                "FAIL"
            }
        );
    }
    println!(
        "=> {} (max rel err {:.3e}, eps {:.1e}, tol {:.1e})",
        if run.report.pass { "pass" } else { "FAIL" },
        run.report.max_rel_err,
        run.report.epsilon,
        run.report.tolerance
    );
}

pub fn run(args: &GradcheckArgs) -> Result<()> {
    let mut spec = WorldSpec::default();
    spec.seed = args.seed;
    spec.train_scenes = 1;
    spec.val_scenes = 1;
    spec.test_scenes = 1;
    spec.scene_regions = 4;
    let dataset = generate(&spec)?;
    let scene = &dataset.train[0];
    let view = SceneView {
        features: &scene.features,
        boxes: &scene.boxes,
    };
    let caption = &scene.captions[0];
    // Four decode steps keep the check fast while touching every op.
    let tokens: Vec<usize> = caption.tokens[..caption.tokens.len().min(5)].to_vec();
    let groundable = groundable_mask(&dataset.vocab);
    let dims = ModelDims::for_dataset(&dataset, 6, 8, 4);
    let opts = GradCheckOptions {
        epsilon: args.epsilon,
        tolerance: args.tolerance,
        max_checks_per_param: None,
    };
    let base_task = GradCheckTask {
        attention_weight: 0.2,
        tanh_grad_scale: if args.inject_bug { 1.02 } else { 1.0 },
        ..GradCheckTask::default()
    };

    let cases: Vec<(String, LocalizerVariant, GradCheckTask)> = vec![
        (
            "linear localizer, full objective".into(),
            LocalizerVariant::Linear,
            base_task.clone(),
        ),
        (
            "mlp localizer, full objective".into(),
            LocalizerVariant::Mlp,
            base_task.clone(),
        ),
        (
            "hidden-state localizer, full objective".into(),
            LocalizerVariant::UseHiddenA,
            base_task.clone(),
        ),
        (
            "linear localizer, groundable-only loss".into(),
            LocalizerVariant::Linear,
            GradCheckTask {
                zero_loss: true,
                ..base_task.clone()
            },
        ),
        (
            "linear localizer, zeroed non-groundable regions".into(),
            LocalizerVariant::Linear,
            GradCheckTask {
                zero_representation: true,
                ..base_task.clone()
            },
        ),
    ];

    let mut runs = Vec::with_capacity(cases.len());
    for (label, variant, task) in cases {
        let params = ModelParams::init(&dims, variant, &mut Rng::new(args.seed ^ 0x5eed))?;
        let report =
            check_model_gradients(&view, &tokens, &groundable, &params, &task, &opts)?;
        runs.push(NamedRun { label, report });
    }

    for run in &runs {
        print_report(run);
        println!();
    }
    let failed: Vec<&NamedRun> = runs.iter().filter(|r| !r.report.pass).collect();
    if !failed.is_empty() {
        println!("worst offenders:");
        for run in &failed {
            if let Some(w) = run.report.worst() {
                println!(
                    "  {}: {} rel err {:.3e} at element {} (analytic {:.6e}, numeric {:.6e})",
                    run.label,
                    w.name,
                    w.max_rel_err,
                    w.worst_index,
                    w.analytic_at_worst,
                    w.numeric_at_worst
                );
            }
        }
    }

    if let Some(path) = &args.json {
        let payload: Vec<serde_json::Value> = runs
            .iter()
            .map(|r| {
                serde_json::json!({
                    "label": r.label,
                    "report": r.report,
                })
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&payload)?;
        text.push('\n');
        fs::write(path, text)?;
        println!("wrote {}", path.display());
    }

    if !failed.is_empty() {
        bail!(cycleground::Error::numeric(format!(
            "{} of {} gradient checks failed",
            failed.len(),
            runs.len()
        )));
    }
    println!("all {} gradient checks passed", runs.len());
    Ok(())
}
