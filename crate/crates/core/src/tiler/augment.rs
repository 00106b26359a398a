use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::raster::GrayImage;

/// Which augmentations to draw when producing extra training tiles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    /// Rotations by multiples of 90°, which keep boxes axis-aligned.
    pub rotate90: bool,
    /// Relative scale jitter; `0.1` draws scales in `[0.9, 1.1]`.
    pub scale_jitter: f64,
    /// Augmented copies emitted per kept tile.
    pub copies: usize,
}

impl AugmentConfig {
    /// Flips, quarter turns and ±10 % scale, two copies per tile.
    pub fn standard() -> Self {
        AugmentConfig {
            horizontal_flip: true,
            vertical_flip: true,
            rotate90: true,
            scale_jitter: 0.1,
            copies: 2,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.copies > 0
            && (self.horizontal_flip || self.vertical_flip || self.rotate90 || self.scale_jitter > 0.0)
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> Augmentation {
        // draw every component so the stream does not depend on the flags
        let hf = rng.random_bool(0.5);
        let vf = rng.random_bool(0.5);
        let turns = rng.random_range(0..4u8);
        let u: f64 = rng.random_range(-1.0..=1.0);
        Augmentation {
            hflip: self.horizontal_flip && hf,
            vflip: self.vertical_flip && vf,
            quarter_turns: if self.rotate90 { turns } else { 0 },
            scale: 1.0 + self.scale_jitter * u,
        }
    }
}

/// One concrete transform of a square tile of side `N`: scale about the
/// center, then horizontal flip, vertical flip and clockwise quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub hflip: bool,
    pub vflip: bool,
    pub quarter_turns: u8,
    pub scale: f64,
}

impl Augmentation {
    pub fn identity() -> Self {
        Augmentation {
            hflip: false,
            vflip: false,
            quarter_turns: 0,
            scale: 1.0,
        }
    }

    pub fn apply_box(&self, b: &BBox, n: f64) -> BBox {
        let c = n / 2.0;
        let mut r = BBox::new(c + self.scale * (b.x - c), c + self.scale * (b.y - c), self.scale * b.w, self.scale * b.h);
        if self.hflip {
            r.x = n - r.x - r.w;
        }
        if self.vflip {
            r.y = n - r.y - r.h;
        }
        for _ in 0..self.quarter_turns % 4 {
            r = BBox::new(n - r.y - r.h, r.x, r.h, r.w);
        }
        r
    }

    pub fn invert_box(&self, b: &BBox, n: f64) -> BBox {
        let mut r = *b;
        for _ in 0..self.quarter_turns % 4 {
            r = BBox::new(r.y, n - r.x - r.w, r.h, r.w);
        }
        if self.vflip {
            r.y = n - r.y - r.h;
        }
        if self.hflip {
            r.x = n - r.x - r.w;
        }
        let c = n / 2.0;
        BBox::new(c + (r.x - c) / self.scale, c + (r.y - c) / self.scale, r.w / self.scale, r.h / self.scale)
    }

    pub fn apply_image(&self, img: &GrayImage, pad: u8) -> GrayImage {
        let mut out = if self.scale != 1.0 {
            img.scale_about_center(self.scale, pad)
        } else {
            img.clone()
        };
        if self.hflip {
            out = out.flip_horizontal();
        }
        if self.vflip {
            out = out.flip_vertical();
        }
        for _ in 0..self.quarter_turns % 4 {
            out = out.rotate90_cw();
        }
        out
    }
}
