use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GrayImage, WHITE};
use crate::error::{Error, Result};

/// Degradation levels of the synthetic test collection.
///
/// `Ideal` leaves the image alone, `Thinner` erodes ink by one pixel,
/// `Thicker` dilates it by one pixel and `GlobalNoise` flips pixels at
/// random.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum NoiseLevel {
    Ideal = 0,
    Thinner = 1,
    Thicker = 2,
    GlobalNoise = 3,
}

impl TryFrom<u8> for NoiseLevel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(NoiseLevel::Ideal),
            1 => Ok(NoiseLevel::Thinner),
            2 => Ok(NoiseLevel::Thicker),
            3 => Ok(NoiseLevel::GlobalNoise),
            _ => Err(Error::invalid(format!("noise level {v} not in 0..=3"))),
        }
    }
}

impl From<NoiseLevel> for u8 {
    fn from(l: NoiseLevel) -> u8 {
        l as u8
    }
}

impl std::fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeConfig {
    /// Per-pixel flip probability for [`NoiseLevel::GlobalNoise`].
    pub flip_prob: f64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig { flip_prob: 0.01 }
    }
}

/// Applies a noise level with default parameters.
pub fn degrade(image: &GrayImage, level: u8, seed: u64) -> Result<GrayImage> {
    degrade_with(image, NoiseLevel::try_from(level)?, seed, &DegradeConfig::default())
}

pub fn degrade_with(
    image: &GrayImage,
    level: NoiseLevel,
    seed: u64,
    cfg: &DegradeConfig,
) -> Result<GrayImage> {
    if !(0.0..=1.0).contains(&cfg.flip_prob) {
        return Err(Error::invalid(format!("flip probability {}", cfg.flip_prob)));
    }
    Ok(match level {
        NoiseLevel::Ideal => image.clone(),
        // white wins: ink shrinks
        NoiseLevel::Thinner => cross_filter(image, u8::max),
        // black wins: ink grows
        NoiseLevel::Thicker => cross_filter(image, u8::min),
        NoiseLevel::GlobalNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = image.clone();
            let p = cfg.flip_prob;
            for y in 0..out.height() {
                for x in 0..out.width() {
                    if rng.random::<f64>() < p {
                        let v = out.get(x, y);
                        out.set(x, y, WHITE - v);
                    }
                }
            }
            out
        }
    })
}

/// 3×3 cross-shaped morphological filter; out-of-image neighbours are skipped.
fn cross_filter(image: &GrayImage, pick: fn(u8, u8) -> u8) -> GrayImage {
    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let mut v = image.get(x, y);
            if x > 0 {
                v = pick(v, image.get(x - 1, y));
            }
            if x + 1 < w {
                v = pick(v, image.get(x + 1, y));
            }
            if y > 0 {
                v = pick(v, image.get(x, y - 1));
            }
            if y + 1 < h {
                v = pick(v, image.get(x, y + 1));
            }
            out.set(x, y, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Primitive;

    fn line_image() -> GrayImage {
        GrayImage::white(10, 10).draw(&Primitive::Line {
            from: (0.0, 5.0),
            to: (9.0, 5.0),
            width: 1.0,
        })
    }

    #[test]
    fn level_zero_is_identity() {
        let img = line_image();
        assert_eq!(degrade(&img, 0, 99).unwrap(), img);
    }

    #[test]
    fn dilation_grows_line() {
        assert!(degrade(&line_image(), 2, 0).unwrap().ink_count() > 10);
    }

    #[test]
    fn erosion_removes_one_pixel_line() {
        let thick = GrayImage::white(10, 10).draw(&Primitive::FilledRect { x: 2.0, y: 2.0, w: 5.0, h: 5.0 });
        assert_eq!(degrade(&line_image(), 1, 0).unwrap().ink_count(), 0);
        assert_eq!(degrade(&thick, 1, 0).unwrap().ink_count(), 9);
    }

    #[test]
    fn zero_flip_probability_is_identity() {
        let img = line_image();
        let out = degrade_with(&img, NoiseLevel::GlobalNoise, 5, &DegradeConfig { flip_prob: 0.0 }).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn global_noise_is_seeded() {
        let img = GrayImage::white(64, 64);
        let a = degrade(&img, 3, 1).unwrap();
        assert_eq!(a, degrade(&img, 3, 1).unwrap());
        assert_ne!(a, degrade(&img, 3, 2).unwrap());
        assert!(a.ink_count() > 0);
    }

    #[test]
    fn invalid_level_rejected() {
        assert!(matches!(degrade(&line_image(), 4, 0), Err(Error::InvalidInput(_))));
    }
}
