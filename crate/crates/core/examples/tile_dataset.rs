//! Cut a plan into overlapping tiles and build an augmented training set.
//!
//! cargo run --example tile_dataset -- [out_dir]

use std::path::PathBuf;

use symspot::dataset::{write_tiles, Manifest};
use symspot::synthgen::{generate_plan, PlanSpec, SymbolKind};
use symspot::tiler::{axis_starts, enumerate_tiles, extract_training_tiles, AugmentConfig, TilingConfig};

fn main() -> symspot::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("symspot-tiles"));
    let plan = generate_plan(&PlanSpec { width: 700, height: 600, seed: 7, ..PlanSpec::default() })?;
    let cfg = TilingConfig::default();

    println!("x starts: {:?}", axis_starts(700, cfg.side(), cfg.stride));
    println!("y starts: {:?}", axis_starts(600, cfg.side(), cfg.stride));
    println!("{} tiles of {} px", enumerate_tiles(700, 600, &cfg).len(), cfg.side());

    let plain = extract_training_tiles(&plan.image, &plan.annotations, &cfg, &AugmentConfig::default(), 1)?;
    let augmented = extract_training_tiles(&plan.image, &plan.annotations, &cfg, &AugmentConfig::standard(), 1)?;
    let partial: usize = plain.iter().map(|t| t.annotations.iter().filter(|a| a.ignore).count()).sum();
    println!(
        "{} tiles hold a whole symbol ({} symbol crops flagged ignore); {} with augmentation",
        plain.len(),
        partial,
        augmented.len()
    );

    let mut manifest = Manifest::new(SymbolKind::class_names());
    write_tiles(&out, "plan", &augmented, &mut manifest)?;
    manifest.save(out.join("manifest.json"))?;
    println!("wrote {}", out.join("manifest.json").display());
    Ok(())
}
