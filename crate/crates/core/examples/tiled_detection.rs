//! Run the full tiled pipeline on a plan with a noisy oracle detector and
//! draw the merged detections into the image.
//!
//! cargo run --example tiled_detection -- [out_dir]

use std::path::PathBuf;

use symspot::backend::{OracleBackend, OracleConfig};
use symspot::dataset::Manifest;
use symspot::metrics::{evaluate, ImageEval};
use symspot::pipeline::{burn_boxes, detect_plan, DetectSettings, PipelineConfig};
use symspot::synthgen::{generate_plan, PlanSpec, SymbolKind};

fn main() -> symspot::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("symspot-detect"));
    std::fs::create_dir_all(&out).map_err(|e| symspot::Error::Io { path: out.clone(), source: e })?;
    let plan = generate_plan(&PlanSpec { width: 1000, height: 800, seed: 3, ..PlanSpec::default() })?;

    let mut manifest = Manifest::new(SymbolKind::class_names());
    manifest.push_image("plan.pgm", 1000, 800, &plan.annotations);
    let cfg = PipelineConfig::default();
    let settings = DetectSettings {
        tiling: cfg.tiling,
        head: cfg.resolve_head(&manifest)?,
        merge: cfg.merge,
        score_threshold: cfg.score_threshold,
        dump_tensors: None,
    };
    let oracle = OracleBackend::new(OracleConfig {
        drop_prob: 0.05,
        jitter_sigma: 1.5,
        false_positive_rate: 0.05,
        seed: 1,
        ..OracleConfig::default()
    })?;

    let found = detect_plan(&plan.image, "plan", &plan.annotations, &oracle, &settings)?;
    println!(
        "{} tiles, {} raw detections, {} after merging, {} symbols",
        found.tiles,
        found.raw.len(),
        found.merged.len(),
        plan.annotations.len()
    );
    let report = evaluate(
        &[ImageEval { detections: found.merged.clone(), truths: plan.annotations.clone(), width: 1000, height: 800 }],
        &manifest.classes,
    )?;
    print!("{}", report.to_table());

    let path = out.join("plan_boxes.pgm");
    burn_boxes(&plan.image, &found.merged).save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
