//! Parametric symbol library. Each symbol draws only inside its box.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::raster::{GrayImage, Primitive};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Door,
    Bathtub,
    Toilet,
    Sink,
    Window,
    Stove,
    Refrigerator,
    Sofa,
}

impl SymbolKind {
    pub const ALL: [SymbolKind; 8] = [
        SymbolKind::Door,
        SymbolKind::Bathtub,
        SymbolKind::Toilet,
        SymbolKind::Sink,
        SymbolKind::Window,
        SymbolKind::Stove,
        SymbolKind::Refrigerator,
        SymbolKind::Sofa,
    ];

    /// Class id in generated manifests (position in [`SymbolKind::ALL`]).
    pub fn class_id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SymbolKind::Door => "door",
            SymbolKind::Bathtub => "bathtub",
            SymbolKind::Toilet => "toilet",
            SymbolKind::Sink => "sink",
            SymbolKind::Window => "window",
            SymbolKind::Stove => "stove",
            SymbolKind::Refrigerator => "refrigerator",
            SymbolKind::Sofa => "sofa",
        }
    }

    pub fn class_names() -> Vec<String> {
        SymbolKind::ALL.iter().map(|k| k.name().to_string()).collect()
    }

    /// Size ranges `(long side, short side)` in pixels, inclusive.
    fn size_range(self) -> ((u32, u32), (u32, u32)) {
        match self {
            SymbolKind::Door => ((30, 48), (30, 48)),
            SymbolKind::Bathtub => ((60, 90), (30, 44)),
            SymbolKind::Toilet => ((30, 40), (22, 28)),
            SymbolKind::Sink => ((26, 36), (20, 26)),
            SymbolKind::Window => ((48, 84), (12, 16)),
            SymbolKind::Stove => ((30, 40), (28, 36)),
            SymbolKind::Refrigerator => ((34, 44), (30, 38)),
            SymbolKind::Sofa => ((60, 90), (28, 38)),
        }
    }

    /// Draws a box size; elongated symbols are randomly turned.
    pub fn sample_size<R: Rng>(self, rng: &mut R) -> (f64, f64) {
        let ((l0, l1), (s0, s1)) = self.size_range();
        let long = rng.random_range(l0..=l1) as f64;
        let short = rng.random_range(s0..=s1) as f64;
        let (long, short) = (long.max(short), long.min(short));
        if rng.random_bool(0.5) {
            (long, short)
        } else {
            (short, long)
        }
    }

    /// Draws the symbol filling `b` (integer box, pixel indices
    /// `[x, x + w) × [y, y + h)`).
    pub fn draw(self, img: &mut GrayImage, b: &BBox) {
        let (x0, y0) = (b.x, b.y);
        let (x1, y1) = (b.x + b.w - 1.0, b.y + b.h - 1.0);
        let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let horizontal = b.w >= b.h;
        let short = b.w.min(b.h);
        let outline = |img: &mut GrayImage, inset: f64, width: f64| {
            img.draw_mut(&Primitive::RectOutline {
                x: b.x + inset,
                y: b.y + inset,
                w: b.w - 2.0 * inset,
                h: b.h - 2.0 * inset,
                width,
            })
        };
        let circle = |img: &mut GrayImage, c: (f64, f64), r: f64| {
            img.draw_mut(&Primitive::Arc { center: c, radius: r, start_deg: 0.0, sweep_deg: 360.0, width: 1.0 })
        };
        let line = |img: &mut GrayImage, from: (f64, f64), to: (f64, f64)| {
            img.draw_mut(&Primitive::Line { from, to, width: 1.0 })
        };
        match self {
            SymbolKind::Door => door(img, b, DoorHinge::TopLeft),
            SymbolKind::Bathtub => {
                outline(img, 0.0, 2.0);
                outline(img, 5.0, 1.0);
                let drain = if horizontal { (x1 - 10.0, cy) } else { (cx, y1 - 10.0) };
                circle(img, drain, 2.0);
            }
            SymbolKind::Toilet => {
                // tank across one end, round bowl in the rest
                let tank = 0.3;
                if horizontal {
                    let tx = x0 + tank * b.w;
                    img.draw_mut(&Primitive::RectOutline { x: b.x, y: b.y, w: (tank * b.w).round(), h: b.h, width: 1.0 });
                    let r = ((x1 - tx).min(b.h - 1.0) / 2.0 - 1.0).max(2.0);
                    circle(img, ((tx + x1) / 2.0, cy), r);
                } else {
                    let ty = y0 + tank * b.h;
                    img.draw_mut(&Primitive::RectOutline { x: b.x, y: b.y, w: b.w, h: (tank * b.h).round(), width: 1.0 });
                    let r = ((y1 - ty).min(b.w - 1.0) / 2.0 - 1.0).max(2.0);
                    circle(img, (cx, (ty + y1) / 2.0), r);
                }
            }
            SymbolKind::Sink => {
                outline(img, 0.0, 1.0);
                circle(img, (cx, cy), (short / 2.0 - 4.0).max(2.0));
                circle(img, (cx, cy), 1.0);
            }
            SymbolKind::Window => {
                outline(img, 0.0, 1.0);
                if horizontal {
                    line(img, (x0, cy.floor()), (x1, cy.floor()));
                } else {
                    line(img, (cx.floor(), y0), (cx.floor(), y1));
                }
            }
            SymbolKind::Stove => {
                outline(img, 0.0, 2.0);
                let r = (short / 4.0 - 3.0).max(2.0);
                for fx in [0.25, 0.75] {
                    for fy in [0.25, 0.75] {
                        circle(img, (x0 + fx * (x1 - x0), y0 + fy * (y1 - y0)), r);
                    }
                }
            }
            SymbolKind::Refrigerator => {
                outline(img, 0.0, 2.0);
                line(img, (x0 + 2.0, y0 + 2.0), (x1 - 2.0, y1 - 2.0));
                if horizontal {
                    let sx = (x0 + 0.35 * b.w).round();
                    line(img, (sx, y0), (sx, y1));
                } else {
                    let sy = (y0 + 0.35 * b.h).round();
                    line(img, (x0, sy), (x1, sy));
                }
            }
            SymbolKind::Sofa => {
                outline(img, 0.0, 1.0);
                let t = 6.0;
                if horizontal {
                    img.draw_mut(&Primitive::FilledRect { x: b.x, y: b.y, w: b.w, h: t });
                    img.draw_mut(&Primitive::RectOutline { x: b.x, y: b.y, w: t + 2.0, h: b.h, width: 1.0 });
                    img.draw_mut(&Primitive::RectOutline { x: b.x + b.w - t - 2.0, y: b.y, w: t + 2.0, h: b.h, width: 1.0 });
                    let mid = cx.round();
                    line(img, (mid, y0 + t), (mid, y1));
                } else {
                    img.draw_mut(&Primitive::FilledRect { x: b.x, y: b.y, w: t, h: b.h });
                    img.draw_mut(&Primitive::RectOutline { x: b.x, y: b.y, w: b.w, h: t + 2.0, width: 1.0 });
                    img.draw_mut(&Primitive::RectOutline { x: b.x, y: b.y + b.h - t - 2.0, w: b.w, h: t + 2.0, width: 1.0 });
                    let mid = cy.round();
                    line(img, (x0 + t, mid), (x1, mid));
                }
            }
        }
    }
}

/// Corner of the door box holding the hinge; the leaf runs along the box
/// edge leaving that corner perpendicular to the wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoorHinge {
    TopLeft,
    TopRight,
    BottomRight,
    BottomLeft,
}

/// Door leaf plus quarter-circle swing, hinged at a corner of `b`.
/// `leaf_horizontal` chooses whether the leaf follows the top/bottom edge.
pub fn door_with_leaf(img: &mut GrayImage, b: &BBox, hinge: DoorHinge, leaf_horizontal: bool) {
    let (x0, y0) = (b.x, b.y);
    let (x1, y1) = (b.x + b.w - 1.0, b.y + b.h - 1.0);
    let (hx, hy, start) = match hinge {
        DoorHinge::TopLeft => (x0, y0, 0.0),
        DoorHinge::TopRight => (x1, y0, 90.0),
        DoorHinge::BottomRight => (x1, y1, 180.0),
        DoorHinge::BottomLeft => (x0, y1, 270.0),
    };
    let (ox, oy) = (if hx == x0 { x1 } else { x0 }, if hy == y0 { y1 } else { y0 });
    let tip = if leaf_horizontal { (ox, hy) } else { (hx, oy) };
    img.draw_mut(&Primitive::Line { from: (hx, hy), to: tip, width: 1.0 });
    let radius = (b.w.min(b.h) - 1.0).max(1.0);
    img.draw_mut(&Primitive::Arc { center: (hx, hy), radius, start_deg: start, sweep_deg: 90.0, width: 1.0 });
}

fn door(img: &mut GrayImage, b: &BBox, hinge: DoorHinge) {
    door_with_leaf(img, b, hinge, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn every_symbol_inks_only_its_box() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for kind in SymbolKind::ALL {
            for _ in 0..20 {
                let (w, h) = kind.sample_size(&mut rng);
                let b = BBox::new(10.0, 12.0, w, h);
                let mut img = GrayImage::white(140, 140);
                kind.draw(&mut img, &b);
                let inside = img.ink_count_in(10, 12, 10 + w as i64, 12 + h as i64);
                assert!(inside >= 5, "{kind:?} {w}x{h}");
                assert_eq!(inside, img.ink_count(), "{kind:?} {w}x{h} spills outside its box");
                assert!((12.0..=200.0).contains(&w) && (12.0..=200.0).contains(&h));
            }
        }
    }

    #[test]
    fn door_hinges_stay_inside() {
        let b = BBox::new(5.0, 5.0, 30.0, 30.0);
        for hinge in [DoorHinge::TopLeft, DoorHinge::TopRight, DoorHinge::BottomRight, DoorHinge::BottomLeft] {
            for leaf in [true, false] {
                let mut img = GrayImage::white(50, 50);
                door_with_leaf(&mut img, &b, hinge, leaf);
                assert_eq!(img.ink_count_in(5, 5, 35, 35), img.ink_count());
                assert!(img.ink_count() > 40);
            }
        }
    }

    #[test]
    fn class_ids_follow_library_order() {
        assert_eq!(SymbolKind::Door.class_id(), 0);
        assert_eq!(SymbolKind::Sofa.class_id(), 7);
        assert_eq!(SymbolKind::class_names().len(), 8);
    }
}
