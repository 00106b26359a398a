//! Score oracle detectors of decreasing quality on a small corpus.

use symspot::backend::{OracleBackend, OracleConfig};
use symspot::dataset::Manifest;
use symspot::metrics::{evaluate, ImageEval};
use symspot::pipeline::{detect_plan, DetectSettings, PipelineConfig};
use symspot::synthgen::{generate_plan, PlanSpec, SymbolKind};

fn main() -> symspot::Result<()> {
    let plans = (0..6)
        .map(|seed| generate_plan(&PlanSpec { seed, ..PlanSpec::default() }))
        .collect::<symspot::Result<Vec<_>>>()?;
    let mut manifest = Manifest::new(SymbolKind::class_names());
    for (i, p) in plans.iter().enumerate() {
        manifest.push_image(format!("plan_{i}.pgm"), p.image.width(), p.image.height(), &p.annotations);
    }
    let cfg = PipelineConfig::default();
    let settings = DetectSettings {
        tiling: cfg.tiling,
        head: cfg.resolve_head(&manifest)?,
        merge: cfg.merge,
        score_threshold: cfg.score_threshold,
        dump_tensors: None,
    };

    let settings_list = [
        ("noiseless", OracleConfig::default()),
        ("jitter 2 px", OracleConfig { jitter_sigma: 2.0, ..OracleConfig::default() }),
        ("drop 20%, false positives", OracleConfig { drop_prob: 0.2, false_positive_rate: 0.1, jitter_sigma: 1.0, ..OracleConfig::default() }),
    ];
    for (name, ocfg) in settings_list {
        let oracle = OracleBackend::new(ocfg)?;
        let mut images = Vec::new();
        for (i, p) in plans.iter().enumerate() {
            let found = detect_plan(&p.image, &format!("plan_{i}"), &p.annotations, &oracle, &settings)?;
            images.push(ImageEval {
                detections: found.merged,
                truths: p.annotations.clone(),
                width: p.image.width(),
                height: p.image.height(),
            });
        }
        println!("== {name}");
        print!("{}", evaluate(&images, &manifest.classes)?.to_table());
        println!();
    }
    Ok(())
}
