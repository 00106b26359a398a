//! Seeded synthetic floor plans with exact ground truth.
//!
//! A plan is an outer wall, an axis-aligned binary partition into rooms,
//! a door on every internal wall where one fits, and a few furniture
//! symbols per room placed by rejection sampling so that no two annotated
//! boxes touch. The finished raster is then degraded at the requested
//! noise level.

mod symbols;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use symbols::{door_with_leaf, DoorHinge, SymbolKind};

use crate::dataset::Manifest;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::raster::{degrade_with, DegradeConfig, GrayImage, NoiseLevel, WHITE};
use crate::tiler::Annotation;
use crate::util::{derive_seed, ensure_dir};

const MARGIN: f64 = 20.0;
const OUTER_WALL: f64 = 4.0;
const INNER_WALL: f64 = 3.0;
const MIN_ROOM_SIDE: f64 = 120.0;
const ROOM_PADDING: f64 = 6.0;
const SYMBOL_GAP: f64 = 3.0;
const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub room_split_depth: usize,
    /// Inclusive range of furniture symbols per room.
    pub symbol_density: [usize; 2],
    pub class_set: Vec<SymbolKind>,
    pub noise_level: NoiseLevel,
    pub degrade: DegradeConfig,
}

impl Default for PlanSpec {
    fn default() -> Self {
        PlanSpec {
            width: 800,
            height: 800,
            seed: 0,
            room_split_depth: 3,
            symbol_density: [1, 3],
            class_set: SymbolKind::ALL.to_vec(),
            noise_level: NoiseLevel::Ideal,
            degrade: DegradeConfig::default(),
        }
    }
}

impl PlanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 512 || self.height < 512 {
            return Err(Error::invalid(format!(
                "plan {}x{} is smaller than 512x512",
                self.width, self.height
            )));
        }
        if self.class_set.is_empty() {
            return Err(Error::invalid("symbol class set is empty"));
        }
        if self.symbol_density[0] > self.symbol_density[1] {
            return Err(Error::invalid(format!(
                "symbol density range {:?} is inverted",
                self.symbol_density
            )));
        }
        Ok(())
    }

    fn furniture(&self) -> Vec<SymbolKind> {
        let mut kinds: Vec<SymbolKind> = self.class_set.iter().copied().filter(|k| *k != SymbolKind::Door).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    fn doors_enabled(&self) -> bool {
        self.class_set.contains(&SymbolKind::Door)
    }
}

/// A generated plan and its annotations (plan pixels).
#[derive(Debug, Clone)]
pub struct Plan {
    pub image: GrayImage,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, Copy)]
struct Wall {
    rect: BBox,
    vertical: bool,
}

struct Layout {
    rooms: Vec<BBox>,
    walls: Vec<Wall>,
}

fn partition<R: Rng>(rect: BBox, depth: usize, rng: &mut R, out: &mut Layout) {
    let can_x = rect.w >= 2.0 * MIN_ROOM_SIDE;
    let can_y = rect.h >= 2.0 * MIN_ROOM_SIDE;
    if depth == 0 || !(can_x || can_y) {
        out.rooms.push(rect);
        return;
    }
    let split_x = match (can_x, can_y) {
        (true, true) => {
            if (rect.w - rect.h).abs() < 0.2 * rect.w.max(rect.h) {
                rng.random_bool(0.5)
            } else {
                rect.w > rect.h
            }
        }
        (x, _) => x,
    };
    let half = INNER_WALL / 2.0;
    if split_x {
        let s = rng.random_range(MIN_ROOM_SIDE as u32..=(rect.w - MIN_ROOM_SIDE) as u32) as f64 + rect.x;
        out.walls.push(Wall {
            rect: BBox::new((s - half).floor(), rect.y, INNER_WALL, rect.h),
            vertical: true,
        });
        partition(BBox::new(rect.x, rect.y, s - rect.x, rect.h), depth - 1, rng, out);
        partition(BBox::new(s, rect.y, rect.right() - s, rect.h), depth - 1, rng, out);
    } else {
        let s = rng.random_range(MIN_ROOM_SIDE as u32..=(rect.h - MIN_ROOM_SIDE) as u32) as f64 + rect.y;
        out.walls.push(Wall {
            rect: BBox::new(rect.x, (s - half).floor(), rect.w, INNER_WALL),
            vertical: false,
        });
        partition(BBox::new(rect.x, rect.y, rect.w, s - rect.y), depth - 1, rng, out);
        partition(BBox::new(rect.x, s, rect.w, rect.bottom() - s), depth - 1, rng, out);
    }
}

fn inflate(b: &BBox, d: f64) -> BBox {
    BBox::new(b.x - d, b.y - d, b.w + 2.0 * d, b.h + 2.0 * d)
}

fn fill(img: &mut GrayImage, b: &BBox, value: u8) {
    img.fill_rect(b.x as i64, b.y as i64, b.right() as i64, b.bottom() as i64, value);
}

/// Generates one plan; identical specs give bit-identical output.
pub fn generate_plan(spec: &PlanSpec) -> Result<Plan> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut img = GrayImage::white(spec.width, spec.height);

    let outer = BBox::new(MARGIN, MARGIN, w - 2.0 * MARGIN, h - 2.0 * MARGIN);
    fill(&mut img, &outer, 0);
    fill(&mut img, &inflate(&outer, -OUTER_WALL), WHITE);
    let interior = inflate(&outer, -OUTER_WALL);

    let mut layout = Layout {
        rooms: Vec::new(),
        walls: Vec::new(),
    };
    partition(interior, spec.room_split_depth, &mut rng, &mut layout);
    for wall in &layout.walls {
        fill(&mut img, &wall.rect, 0);
    }

    let mut annotations: Vec<Annotation> = Vec::new();
    let blocked = |b: &BBox, anns: &[Annotation], skip_wall: Option<usize>, walls: &[Wall]| {
        let probe = inflate(b, SYMBOL_GAP);
        anns.iter().any(|a| a.bbox.intersection_area(&probe) > 0.0)
            || walls
                .iter()
                .enumerate()
                .any(|(k, wl)| Some(k) != skip_wall && wl.rect.intersection_area(&probe) > 0.0)
    };

    if spec.doors_enabled() {
        for (k, wall) in layout.walls.iter().enumerate() {
            let r = wall.rect;
            let span = if wall.vertical { r.h } else { r.w };
            for _ in 0..50 {
                let (dw, _) = SymbolKind::Door.sample_size(&mut rng);
                let pos_hi = span - 10.0 - dw;
                if pos_hi <= 10.0 {
                    break;
                }
                let pos = rng.random_range(10.0..pos_hi).floor();
                let after = rng.random_bool(0.5);
                let hinge_first = rng.random_bool(0.5);
                let (bbox, opening, hinge, leaf_horizontal) = if wall.vertical {
                    let y = r.y + pos;
                    let x = if after { r.right() } else { r.x - dw };
                    let hinge = match (after, hinge_first) {
                        (true, true) => DoorHinge::TopLeft,
                        (true, false) => DoorHinge::BottomLeft,
                        (false, true) => DoorHinge::TopRight,
                        (false, false) => DoorHinge::BottomRight,
                    };
                    (BBox::new(x, y, dw, dw), BBox::new(r.x, y, r.w, dw), hinge, true)
                } else {
                    let x = r.x + pos;
                    let y = if after { r.bottom() } else { r.y - dw };
                    let hinge = match (after, hinge_first) {
                        (true, true) => DoorHinge::TopLeft,
                        (true, false) => DoorHinge::TopRight,
                        (false, true) => DoorHinge::BottomLeft,
                        (false, false) => DoorHinge::BottomRight,
                    };
                    (BBox::new(x, y, dw, dw), BBox::new(x, r.y, dw, r.h), hinge, false)
                };
                if !interior.contains(&bbox)
                    || blocked(&bbox, &annotations, Some(k), &layout.walls)
                    || blocked(&opening, &annotations, Some(k), &layout.walls)
                {
                    continue;
                }
                fill(&mut img, &opening, WHITE);
                door_with_leaf(&mut img, &bbox, hinge, leaf_horizontal);
                annotations.push(Annotation::new(SymbolKind::Door.class_id(), SymbolKind::Door.name(), bbox));
                break;
            }
        }
    }

    let furniture = spec.furniture();
    if !furniture.is_empty() {
        for room in &layout.rooms {
            let region = inflate(room, -ROOM_PADDING);
            let count = rng.random_range(spec.symbol_density[0]..=spec.symbol_density[1]);
            for _ in 0..count {
                // kind, size and position are redrawn on every attempt
                let mut placed = None;
                let mut last = (SymbolKind::Door, 0.0, 0.0);
                for _ in 0..MAX_ATTEMPTS {
                    let kind = furniture[rng.random_range(0..furniture.len())];
                    let (sw, sh) = kind.sample_size(&mut rng);
                    last = (kind, sw, sh);
                    if region.w < sw || region.h < sh {
                        continue;
                    }
                    let x = (region.x + rng.random_range(0.0..=(region.w - sw))).floor();
                    let y = (region.y + rng.random_range(0.0..=(region.h - sh))).floor();
                    let b = BBox::new(x, y, sw, sh);
                    if region.contains(&b) && !blocked(&b, &annotations, None, &layout.walls) {
                        placed = Some((kind, b));
                        break;
                    }
                }
                let Some((kind, b)) = placed else {
                    let (kind, sw, sh) = last;
                    return Err(Error::Generation(format!(
                        "could not place a symbol in room at ({}, {}) after {MAX_ATTEMPTS} attempts (last tried a {sw}x{sh} {}); lower the symbol density",
                        room.x,
                        room.y,
                        kind.name()
                    )));
                };
                kind.draw(&mut img, &b);
                annotations.push(Annotation::new(kind.class_id(), kind.name(), b));
            }
        }
    }

    let image = degrade_with(&img, spec.noise_level, derive_seed(spec.seed, "noise"), &spec.degrade)?;
    Ok(Plan { image, annotations })
}

/// Seed of the `index`-th plan of a corpus.
pub fn corpus_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &format!("plan{index}"))
}

/// File name of the `index`-th plan of a corpus.
pub fn corpus_name(index: usize) -> String {
    format!("plan_{index:03}.pgm")
}

/// Generates `count` plans into `out_dir` and writes `manifest.json`.
pub fn write_corpus(out_dir: &Path, count: usize, spec: &PlanSpec) -> Result<Manifest> {
    ensure_dir(out_dir)?;
    let mut manifest = Manifest::new(SymbolKind::class_names());
    for i in 0..count {
        let plan = generate_plan(&PlanSpec {
            seed: corpus_seed(spec.seed, i),
            ..spec.clone()
        })?;
        let name = corpus_name(i);
        plan.image.save(out_dir.join(&name))?;
        manifest.push_image(name, plan.image.width(), plan.image.height(), &plan.annotations);
    }
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::degrade;

    fn spec(seed: u64) -> PlanSpec {
        PlanSpec { seed, ..Default::default() }
    }

    #[test]
    fn deterministic() {
        let a = generate_plan(&spec(5)).unwrap();
        let b = generate_plan(&spec(5)).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.annotations, b.annotations);
        assert_ne!(generate_plan(&spec(6)).unwrap().image, a.image);
    }

    #[test]
    fn zero_density_gives_doors_only() {
        let plan = generate_plan(&PlanSpec { symbol_density: [0, 0], ..spec(1) }).unwrap();
        assert!(!plan.annotations.is_empty());
        assert!(plan.annotations.iter().all(|a| a.class_name == "door"));
    }

    #[test]
    fn annotations_valid_disjoint_and_inked() {
        for seed in 0..8 {
            let s = PlanSpec { width: 512 + 97 * seed as usize, height: 600, ..spec(seed) };
            let plan = generate_plan(&s).unwrap();
            let bounds = BBox::new(0.0, 0.0, s.width as f64, s.height as f64);
            for (i, a) in plan.annotations.iter().enumerate() {
                assert!(bounds.contains(&a.bbox));
                assert!(a.bbox.w >= 12.0 && a.bbox.h >= 12.0 && a.bbox.w <= 200.0 && a.bbox.h <= 200.0);
                let b = a.bbox;
                let ink = plan.image.ink_count_in(b.x as i64, b.y as i64, b.right() as i64, b.bottom() as i64);
                assert!(ink >= 5, "{a:?}");
                for other in &plan.annotations[i + 1..] {
                    assert_eq!(a.bbox.intersection_area(&other.bbox), 0.0);
                }
            }
        }
    }

    #[test]
    fn noise_applied_after_drawing() {
        let clean = generate_plan(&spec(2)).unwrap();
        let noisy = generate_plan(&PlanSpec { noise_level: NoiseLevel::Thicker, ..spec(2) }).unwrap();
        assert_eq!(clean.annotations, noisy.annotations);
        assert_eq!(noisy.image, degrade(&clean.image, 2, 0).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_plan(&PlanSpec { width: 300, ..spec(0) }).is_err());
        assert!(generate_plan(&PlanSpec { class_set: vec![], ..spec(0) }).is_err());
        assert!(generate_plan(&PlanSpec { symbol_density: [3, 1], ..spec(0) }).is_err());
    }

    #[test]
    fn impossible_density_is_generation_error() {
        let err = generate_plan(&PlanSpec { symbol_density: [60, 60], ..spec(0) }).unwrap_err();
        assert!(matches!(err, Error::Generation(ref m) if m.contains("lower the symbol density")), "{err}");
    }

    #[test]
    fn corpus_written_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_corpus(dir.path(), 2, &PlanSpec { width: 512, height: 512, ..spec(3) }).unwrap();
        assert_eq!(m.images.len(), 2);
        let back = Manifest::load(dir.path().join("manifest.json")).unwrap();
        assert_eq!(back, m);
        let img = GrayImage::load(dir.path().join("plan_001.pgm")).unwrap();
        assert_eq!((img.width(), img.height()), (512, 512));
    }
}
