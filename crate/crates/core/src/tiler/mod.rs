//! Overlapping tile enumeration and training-tile extraction.
//!
//! A tile is a square window of side `round(alpha * net_size)` plan pixels
//! whose top-left corners sit on a stride-`S` lattice. The last start on
//! each axis is clamped to the plan border so the whole plan is covered
//! without changing the tile size.

mod augment;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use augment::{AugmentConfig, Augmentation};

use crate::error::{Error, Result};
use crate::geometry::{plan_to_tile, BBox, TileFrame};
use crate::raster::GrayImage;
use crate::util::derive_seed;

/// Tile geometry: scale `alpha`, network input side `net_size` and stride.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TilingConfig {
    pub alpha: f64,
    pub net_size: usize,
    pub stride: usize,
    pub pad_value: u8,
}

impl Default for TilingConfig {
    fn default() -> Self {
        TilingConfig {
            alpha: 1.0,
            net_size: 227,
            stride: 50,
            pad_value: 255,
        }
    }
}

impl TilingConfig {
    /// Tile side in plan pixels.
    pub fn side(&self) -> usize {
        (self.alpha * self.net_size as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.net_size < 32 {
            return Err(Error::invalid(format!("net_size {} below 32", self.net_size)));
        }
        if self.stride < 1 || self.stride > self.side() {
            return Err(Error::invalid(format!(
                "stride {} outside [1, {}]",
                self.stride,
                self.side()
            )));
        }
        Ok(())
    }

    fn frame(&self, x0: usize, y0: usize) -> TileFrame {
        TileFrame::new(x0 as f64, y0 as f64, self.side() as f64, self.net_size as f64)
    }
}

/// A class-labelled box. `ignore` marks regions excluded from the loss and
/// from metrics (symbols cut by a tile border).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: usize,
    pub class_name: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default)]
    pub ignore: bool,
}

impl Annotation {
    pub fn new(class_id: usize, class_name: impl Into<String>, bbox: BBox) -> Self {
        Annotation {
            class_id,
            class_name: class_name.into(),
            bbox,
            ignore: false,
        }
    }
}

/// Start offsets along one axis of length `len`.
pub fn axis_starts(len: usize, side: usize, stride: usize) -> Vec<usize> {
    if len <= side {
        return vec![0];
    }
    let last = len - side;
    let mut starts: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if *starts.last().unwrap() != last {
        starts.push(last);
    }
    starts
}

/// All tile frames over a `width × height` plan in row-major `(y0, x0)` order.
pub fn enumerate_tiles(width: usize, height: usize, cfg: &TilingConfig) -> Vec<TileFrame> {
    let side = cfg.side();
    let xs = axis_starts(width, side, cfg.stride);
    let ys = axis_starts(height, side, cfg.stride);
    ys.iter()
        .flat_map(|&y0| xs.iter().map(move |&x0| cfg.frame(x0, y0)))
        .collect()
}

/// Crops the tile from the plan (padding outside) and resamples it to the
/// network input size. With `alpha == 1` this is a plain crop.
pub fn tile_pixels(plan: &GrayImage, frame: &TileFrame, cfg: &TilingConfig) -> GrayImage {
    let side = cfg.side();
    let crop = plan.crop_padded(frame.x0 as i64, frame.y0 as i64, side, cfg.pad_value);
    if side == cfg.net_size {
        crop
    } else {
        crop.resize_bilinear(cfg.net_size, cfg.net_size)
    }
}

/// Stable identifier `<stem>_x<x0>_y<y0>` for a tile of a plan image.
pub fn tile_id(image_stem: &str, frame: &TileFrame) -> String {
    format!("{image_stem}_x{}_y{}", frame.x0 as i64, frame.y0 as i64)
}

/// Annotations relevant to one tile, mapped to network-input coordinates:
/// fully contained symbols are kept, partially visible ones become ignore
/// regions.
pub fn tile_annotations(annotations: &[Annotation], frame: &TileFrame) -> Vec<Annotation> {
    let bounds = frame.bounds();
    annotations
        .iter()
        .filter_map(|a| {
            let contained = bounds.contains(&a.bbox);
            if !contained && bounds.intersection_area(&a.bbox) <= 0.0 {
                return None;
            }
            Some(Annotation {
                class_id: a.class_id,
                class_name: a.class_name.clone(),
                bbox: plan_to_tile(&a.bbox, frame),
                ignore: a.ignore || !contained,
            })
        })
        .collect()
}

/// One extracted training sample.
#[derive(Debug, Clone)]
pub struct TrainingTile {
    pub frame: TileFrame,
    /// `None` for the unaugmented tile.
    pub augmentation: Option<Augmentation>,
    pub image: GrayImage,
    /// Network-input coordinates.
    pub annotations: Vec<Annotation>,
}

impl TrainingTile {
    pub fn positives(&self) -> usize {
        self.annotations.iter().filter(|a| !a.ignore).count()
    }
}

fn check_annotations(plan: &GrayImage, annotations: &[Annotation]) -> Result<()> {
    let bounds = BBox::new(0.0, 0.0, plan.width() as f64, plan.height() as f64);
    for (i, a) in annotations.iter().enumerate() {
        if !a.bbox.is_valid() || !bounds.contains(&a.bbox) {
            return Err(Error::invalid(format!(
                "annotation #{i} ({} at x={} y={} w={} h={}) lies outside the {}x{} plan",
                a.class_name,
                a.bbox.x,
                a.bbox.y,
                a.bbox.w,
                a.bbox.h,
                plan.width(),
                plan.height()
            )));
        }
    }
    Ok(())
}

/// Extracts every tile holding at least one complete symbol, plus
/// augmented copies of each.
///
/// Tiles are processed in parallel; each tile draws its augmentations from
/// a generator derived from `(seed, tile position)`, so the output does not
/// depend on scheduling.
pub fn extract_training_tiles(
    plan: &GrayImage,
    annotations: &[Annotation],
    cfg: &TilingConfig,
    augment: &AugmentConfig,
    seed: u64,
) -> Result<Vec<TrainingTile>> {
    cfg.validate()?;
    check_annotations(plan, annotations)?;
    let largest = annotations
        .iter()
        .map(|a| a.bbox.w.max(a.bbox.h))
        .fold(0.0, f64::max);
    if largest >= cfg.side() as f64 {
        log_warning(&format!(
            "tile side {} does not exceed the largest symbol ({largest} px)",
            cfg.side()
        ));
    }
    let frames = enumerate_tiles(plan.width(), plan.height(), cfg);
    let n = cfg.net_size as f64;
    let per_tile: Vec<Vec<TrainingTile>> = frames
        .par_iter()
        .map(|frame| {
            let anns = tile_annotations(annotations, frame);
            if !anns.iter().any(|a| !a.ignore) {
                return Vec::new();
            }
            let image = tile_pixels(plan, frame, cfg);
            let mut out = Vec::with_capacity(1 + augment.copies);
            if augment.is_enabled() {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &tile_id("tile", frame)));
                for _ in 0..augment.copies {
                    let aug = augment.sample(&mut rng);
                    let boxes: Vec<Annotation> = anns
                        .iter()
                        .map(|a| {
                            let bbox = aug.apply_box(&a.bbox, n);
                            let inside = BBox::new(0.0, 0.0, n, n).contains(&bbox);
                            Annotation {
                                bbox,
                                ignore: a.ignore || !inside,
                                ..a.clone()
                            }
                        })
                        .collect();
                    if boxes.iter().any(|a| !a.ignore) {
                        out.push(TrainingTile {
                            frame: *frame,
                            augmentation: Some(aug),
                            image: aug.apply_image(&image, cfg.pad_value),
                            annotations: boxes,
                        });
                    }
                }
            }
            out.insert(
                0,
                TrainingTile {
                    frame: *frame,
                    augmentation: None,
                    image,
                    annotations: anns,
                },
            );
            out
        })
        .collect();
    Ok(per_tile.into_iter().flatten().collect())
}

fn log_warning(msg: &str) {
    eprintln!("warning: {msg}");
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(stride: usize) -> TilingConfig {
        TilingConfig {
            stride,
            ..TilingConfig::default()
        }
    }

    #[test]
    fn starts_with_clamped_border() {
        assert_eq!(axis_starts(300, 227, 50), vec![0, 50, 73]);
        let tiles = enumerate_tiles(300, 300, &cfg(50));
        assert_eq!(tiles.len(), 9);
        assert_eq!((tiles[1].x0, tiles[1].y0), (50.0, 0.0));
        assert_eq!((tiles[3].x0, tiles[3].y0), (0.0, 50.0));
    }

    #[test]
    fn exact_fit_and_small_plan() {
        let t = enumerate_tiles(227, 227, &cfg(50));
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].x0, t[0].y0), (0.0, 0.0));
        assert_eq!(enumerate_tiles(100, 100, &cfg(50)).len(), 1);
        // border start already on the lattice
        assert_eq!(axis_starts(327, 227, 50), vec![0, 50, 100]);
    }

    #[test]
    fn small_plan_tile_is_padded() {
        let plan = GrayImage::filled(100, 100, 0);
        let tiles = enumerate_tiles(100, 100, &cfg(50));
        let px = tile_pixels(&plan, &tiles[0], &cfg(50));
        assert_eq!((px.width(), px.height()), (227, 227));
        assert_eq!(px.get(99, 99), 0);
        assert_eq!(px.get(100, 0), 255);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(50).validate().is_ok());
        assert!(cfg(0).validate().is_err());
        assert!(cfg(228).validate().is_err());
        assert!(TilingConfig { alpha: 0.0, ..cfg(50) }.validate().is_err());
        assert!(TilingConfig { net_size: 16, stride: 4, ..cfg(50) }.validate().is_err());
        assert_eq!(TilingConfig { alpha: 3.0, ..cfg(50) }.side(), 681);
    }

    #[test]
    fn single_symbol_yields_one_tile() {
        let plan = GrayImage::white(300, 300);
        let ann = vec![Annotation::new(0, "door", BBox::new(10.0, 10.0, 70.0, 80.0))];
        let tiles = extract_training_tiles(&plan, &ann, &cfg(50), &AugmentConfig::default(), 0).unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!((tiles[0].frame.x0, tiles[0].frame.y0), (0.0, 0.0));
        assert_eq!(tiles[0].annotations[0].bbox, BBox::new(10.0, 10.0, 70.0, 80.0));
    }

    #[test]
    fn no_annotations_no_tiles() {
        let plan = GrayImage::white(300, 300);
        let tiles = extract_training_tiles(&plan, &[], &cfg(50), &AugmentConfig::standard(), 0).unwrap();
        assert!(tiles.is_empty());
    }

    #[test]
    fn out_of_bounds_annotation_named() {
        let plan = GrayImage::white(300, 300);
        let ann = vec![
            Annotation::new(0, "door", BBox::new(10.0, 10.0, 20.0, 20.0)),
            Annotation::new(1, "sink", BBox::new(290.0, 10.0, 20.0, 20.0)),
        ];
        let err = extract_training_tiles(&plan, &ann, &cfg(50), &AugmentConfig::default(), 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("#1") && msg.contains("sink"), "{msg}");
    }

    #[test]
    fn partial_symbols_become_ignore_regions() {
        let plan = GrayImage::white(300, 300);
        let ann = vec![
            Annotation::new(0, "door", BBox::new(10.0, 10.0, 40.0, 40.0)),
            Annotation::new(1, "sink", BBox::new(200.0, 20.0, 60.0, 30.0)),
        ];
        let tiles = extract_training_tiles(&plan, &ann, &cfg(50), &AugmentConfig::default(), 0).unwrap();
        let first = tiles.iter().find(|t| t.frame.x0 == 0.0 && t.frame.y0 == 0.0).unwrap();
        assert_eq!(first.annotations.len(), 2);
        assert!(!first.annotations[0].ignore);
        assert!(first.annotations[1].ignore);
        for t in &tiles {
            assert!(t.positives() >= 1);
        }
    }

    #[test]
    fn alpha_scales_annotations_and_pixels() {
        let c = TilingConfig { alpha: 2.0, net_size: 64, stride: 64, pad_value: 255 };
        let plan = GrayImage::white(128, 128);
        let ann = vec![Annotation::new(0, "toilet", BBox::new(20.0, 40.0, 30.0, 10.0))];
        let tiles = extract_training_tiles(&plan, &ann, &c, &AugmentConfig::default(), 0).unwrap();
        assert_eq!(tiles.len(), 1);
        assert_eq!(tiles[0].image.width(), 64);
        assert_eq!(tiles[0].annotations[0].bbox, BBox::new(10.0, 20.0, 15.0, 5.0));
    }

    #[test]
    fn augmentation_is_seeded_and_invertible() {
        let plan = GrayImage::white(400, 400);
        let ann = vec![Annotation::new(0, "door", BBox::new(100.0, 100.0, 40.0, 30.0))];
        let aug = AugmentConfig::standard();
        let a = extract_training_tiles(&plan, &ann, &cfg(50), &aug, 11).unwrap();
        let b = extract_training_tiles(&plan, &ann, &cfg(50), &aug, 11).unwrap();
        assert_eq!(a.len(), b.len());
        assert!(a.iter().any(|t| t.augmentation.is_some()));
        for (ta, tb) in a.iter().zip(&b) {
            assert_eq!(ta.image, tb.image);
            assert_eq!(ta.annotations, tb.annotations);
            assert!(ta.positives() >= 1);
            if let Some(g) = ta.augmentation {
                let orig = tile_annotations(&ann, &ta.frame);
                for (o, t) in orig.iter().zip(&ta.annotations) {
                    let back = g.invert_box(&t.bbox, 227.0);
                    assert!((back.x - o.bbox.x).abs() < 1e-6 && (back.h - o.bbox.h).abs() < 1e-6);
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn tiles_sorted_and_unique(w in 1usize..1500, h in 1usize..1500, stride in 1usize..227) {
            let tiles = enumerate_tiles(w, h, &cfg(stride));
            let keys: Vec<(i64, i64)> = tiles.iter().map(|t| (t.y0 as i64, t.x0 as i64)).collect();
            let mut sorted = keys.clone();
            sorted.sort();
            sorted.dedup();
            proptest::prop_assert_eq!(keys, sorted);
            for t in &tiles {
                proptest::prop_assert!(t.x0 + t.side <= w.max(227) as f64);
            }
        }
    }
}
