//! Ink counts of a plan under each degradation level.

use symspot::raster::{degrade_with, DegradeConfig, NoiseLevel, Primitive};
use symspot::GrayImage;

fn main() -> symspot::Result<()> {
    let mut img = GrayImage::white(64, 64);
    img.draw_mut(&Primitive::Line { from: (4.0, 10.0), to: (59.0, 10.0), width: 1.0 });
    img.draw_mut(&Primitive::RectOutline { x: 8.0, y: 20.0, w: 30.0, h: 30.0, width: 3.0 });
    img.draw_mut(&Primitive::Arc { center: (48.0, 40.0), radius: 12.0, start_deg: 0.0, sweep_deg: 270.0, width: 2.0 });
    println!("original: {} ink pixels", img.ink_count());
    for level in [NoiseLevel::Thinner, NoiseLevel::Thicker, NoiseLevel::GlobalNoise] {
        for flip_prob in [0.0, 0.01, 0.05] {
            if level != NoiseLevel::GlobalNoise && flip_prob > 0.0 {
                continue;
            }
            let out = degrade_with(&img, level, 9, &DegradeConfig { flip_prob })?;
            println!("level {level} (flip {flip_prob}): {} ink pixels", out.ink_count());
        }
    }
    Ok(())
}
