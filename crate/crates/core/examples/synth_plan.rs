//! Draw one synthetic plan at every noise level and list its symbols.
//!
//! cargo run --example synth_plan -- [out_dir]

use std::path::PathBuf;

use symspot::raster::NoiseLevel;
use symspot::synthgen::{generate_plan, PlanSpec};

fn main() -> symspot::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("symspot-synth"));
    std::fs::create_dir_all(&out).map_err(|e| symspot::Error::Io { path: out.clone(), source: e })?;

    for level in [NoiseLevel::Ideal, NoiseLevel::Thinner, NoiseLevel::Thicker, NoiseLevel::GlobalNoise] {
        let spec = PlanSpec { width: 900, height: 700, seed: 42, noise_level: level, ..PlanSpec::default() };
        let plan = generate_plan(&spec)?;
        let path = out.join(format!("plan_noise{level}.pgm"));
        plan.image.save(&path)?;
        println!("noise level {level}: {} ink pixels -> {}", plan.image.ink_count(), path.display());
        if level == NoiseLevel::Ideal {
            for a in &plan.annotations {
                let b = a.bbox;
                println!("  {:<12} ({:>4}, {:>4}) {:>3} x {:<3}", a.class_name, b.x, b.y, b.w, b.h);
            }
        }
    }
    Ok(())
}
