//! Hand tile tensors to the pipeline through `.rawpred` files, the way a
//! network running in another environment would.
//!
//! cargo run --example tensor_bridge -- [tensor_dir]

use std::path::PathBuf;

use symspot::backend::{decode_rawpred, rawpred_path, write_rawpred, FileBackend};
use symspot::dataset::Manifest;
use symspot::head::encode_detections;
use symspot::pipeline::{detect_plan, DetectSettings, PipelineConfig};
use symspot::synthgen::{generate_plan, PlanSpec, SymbolKind};
use symspot::tiler::{enumerate_tiles, tile_annotations, tile_id};
use symspot::Detection;

fn main() -> symspot::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("symspot-tensors"));
    std::fs::create_dir_all(&dir).map_err(|e| symspot::Error::Io { path: dir.clone(), source: e })?;
    let plan = generate_plan(&PlanSpec { width: 640, height: 560, seed: 5, ..PlanSpec::default() })?;
    let mut manifest = Manifest::new(SymbolKind::class_names());
    manifest.push_image("plan.pgm", 640, 560, &plan.annotations);
    let cfg = PipelineConfig::default();
    let head = cfg.resolve_head(&manifest)?;

    // stand-in for an external network: one tensor file per tile
    let frames = enumerate_tiles(640, 560, &cfg.tiling);
    for frame in &frames {
        let dets: Vec<Detection> = tile_annotations(&plan.annotations, frame)
            .iter()
            .filter(|a| !a.ignore)
            .map(|a| Detection { class_id: a.class_id, bbox: a.bbox, score: 0.8 })
            .collect();
        write_rawpred(&rawpred_path(&dir, &tile_id("plan", frame)), &encode_detections(&dets, &head)?)?;
    }
    let sample = rawpred_path(&dir, &tile_id("plan", &frames[0]));
    let bytes = std::fs::read(&sample).map_err(|e| symspot::Error::Io { path: sample.clone(), source: e })?;
    let raw = decode_rawpred(&bytes)?;
    println!(
        "{} tensors in {}; each {}x{}x{} ({} bytes)",
        frames.len(),
        dir.display(),
        raw.grid_h,
        raw.grid_w,
        raw.channels,
        bytes.len()
    );

    let settings = DetectSettings {
        tiling: cfg.tiling,
        head,
        merge: cfg.merge,
        score_threshold: cfg.score_threshold,
        dump_tensors: None,
    };
    let found = detect_plan(&plan.image, "plan", &[], &FileBackend::new(&dir), &settings)?;
    println!("{} detections for {} symbols", found.merged.len(), plan.annotations.len());
    Ok(())
}
