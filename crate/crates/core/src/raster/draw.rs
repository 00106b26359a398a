use super::{GrayImage, INK};

/// Vector primitives rendered as hard-edged ink.
///
/// Line and arc coordinates place pixel centers on integer positions, so a
/// one-pixel line from `(0, 5)` to `(9, 5)` covers exactly the pixels
/// `(0..=9, 5)`. Rectangles cover the pixel indices `[x, x + w) × [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Line {
        from: (f64, f64),
        to: (f64, f64),
        width: f64,
    },
    RectOutline {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        width: f64,
    },
    /// Circular arc; angles in degrees, measured clockwise from +x
    /// (y points down).
    Arc {
        center: (f64, f64),
        radius: f64,
        start_deg: f64,
        sweep_deg: f64,
        width: f64,
    },
    FilledRect {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
    },
}

impl GrayImage {
    /// Returns a copy with `primitive` drawn in ink.
    pub fn draw(&self, primitive: &Primitive) -> GrayImage {
        let mut out = self.clone();
        out.draw_mut(primitive);
        out
    }

    /// Draws in place; everything is clipped to the image.
    pub fn draw_mut(&mut self, primitive: &Primitive) {
        match *primitive {
            Primitive::Line { from, to, width } => self.draw_line(from, to, width),
            Primitive::RectOutline { x, y, w, h, width } => {
                let t = width.round().max(1.0) as i64;
                let (x0, x1) = (x.ceil() as i64, (x + w).ceil() as i64);
                let (y0, y1) = (y.ceil() as i64, (y + h).ceil() as i64);
                self.fill_span(x0, y0, x1, (y0 + t).min(y1));
                self.fill_span(x0, (y1 - t).max(y0), x1, y1);
                self.fill_span(x0, y0, (x0 + t).min(x1), y1);
                self.fill_span((x1 - t).max(x0), y0, x1, y1);
            }
            Primitive::Arc {
                center,
                radius,
                start_deg,
                sweep_deg,
                width,
            } => self.draw_arc(center, radius, start_deg, sweep_deg, width),
            Primitive::FilledRect { x, y, w, h } => self.fill_span(
                x.ceil() as i64,
                y.ceil() as i64,
                (x + w).ceil() as i64,
                (y + h).ceil() as i64,
            ),
        }
    }

    fn fill_span(&mut self, x0: i64, y0: i64, x1: i64, y1: i64) {
        self.fill_rect(x0, y0, x1, y1, INK);
    }

    /// Sets every pixel of `[x0, x1) × [y0, y1)` (clipped) to `value`.
    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, value: u8) {
        let x0 = x0.clamp(0, self.width as i64) as usize;
        let x1 = x1.clamp(0, self.width as i64) as usize;
        let y0 = y0.clamp(0, self.height as i64) as usize;
        let y1 = y1.clamp(0, self.height as i64) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                self.set(x, y, value);
            }
        }
    }

    fn pixel_range(&self, lo: f64, hi: f64, len: usize) -> std::ops::Range<usize> {
        let a = lo.floor().max(0.0).min(len as f64) as usize;
        let b = (hi.ceil() + 1.0).max(0.0).min(len as f64) as usize;
        a..b
    }

    fn draw_line(&mut self, (ax, ay): (f64, f64), (bx, by): (f64, f64), width: f64) {
        let r = width / 2.0;
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let xs = self.pixel_range(ax.min(bx) - r, ax.max(bx) + r, self.width);
        let ys = self.pixel_range(ay.min(by) - r, ay.max(by) + r, self.height);
        for y in ys {
            for x in xs.clone() {
                let (px, py) = (x as f64, y as f64);
                let t = if len2 > 0.0 {
                    (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (ax + t * dx - px, ay + t * dy - py);
                if qx * qx + qy * qy <= r * r + 1e-9 {
                    self.set(x, y, INK);
                }
            }
        }
    }

    fn draw_arc(&mut self, (cx, cy): (f64, f64), radius: f64, start: f64, sweep: f64, width: f64) {
        let half = width / 2.0;
        let outer = radius + half;
        let xs = self.pixel_range(cx - outer, cx + outer, self.width);
        let ys = self.pixel_range(cy - outer, cy + outer, self.height);
        for y in ys {
            for x in xs.clone() {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let d = dx.hypot(dy);
                if (d - radius).abs() > half + 1e-9 {
                    continue;
                }
                if d < 1e-12 || sweep >= 360.0 || angle_in_span(dy.atan2(dx).to_degrees(), start, sweep) {
                    self.set(x, y, INK);
                }
            }
        }
    }
}

fn angle_in_span(angle: f64, start: f64, sweep: f64) -> bool {
    let rel = (angle - start).rem_euclid(360.0);
    rel <= sweep + 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_line_inks_ten_pixels() {
        let img = GrayImage::white(10, 10).draw(&Primitive::Line {
            from: (0.0, 5.0),
            to: (9.0, 5.0),
            width: 1.0,
        });
        assert_eq!(img.ink_count(), 10);
        assert!((0..10).all(|x| img.is_ink(x, 5)));
    }

    #[test]
    fn zero_radius_circle_is_one_pixel() {
        let img = GrayImage::white(9, 9).draw(&Primitive::Arc {
            center: (4.0, 4.0),
            radius: 0.0,
            start_deg: 0.0,
            sweep_deg: 360.0,
            width: 1.0,
        });
        assert_eq!(img.ink_count(), 1);
        assert!(img.is_ink(4, 4));
    }

    #[test]
    fn rect_outline_perimeter() {
        let img = GrayImage::white(10, 10).draw(&Primitive::RectOutline {
            x: 1.0,
            y: 1.0,
            w: 8.0,
            h: 8.0,
            width: 1.0,
        });
        assert_eq!(img.ink_count(), 4 * 8 - 4);
    }

    #[test]
    fn filled_rect_and_clipping() {
        let img = GrayImage::white(10, 10).draw(&Primitive::FilledRect {
            x: 7.0,
            y: -3.0,
            w: 10.0,
            h: 5.0,
        });
        assert_eq!(img.ink_count(), 3 * 2);
    }

    #[test]
    fn quarter_arc_stays_in_its_quadrant() {
        let img = GrayImage::white(41, 41).draw(&Primitive::Arc {
            center: (20.0, 20.0),
            radius: 15.0,
            start_deg: 0.0,
            sweep_deg: 90.0,
            width: 1.0,
        });
        assert!(img.ink_count() > 15);
        for y in 0..41 {
            for x in 0..41 {
                if img.is_ink(x, y) {
                    assert!(x >= 20 && y >= 20, "({x},{y}) outside the +x/+y quadrant");
                }
            }
        }
    }

    #[test]
    fn drawing_is_idempotent() {
        let prims = [
            Primitive::Line { from: (1.3, 2.0), to: (17.0, 11.5), width: 2.5 },
            Primitive::Arc { center: (10.0, 10.0), radius: 6.0, start_deg: 45.0, sweep_deg: 200.0, width: 2.0 },
            Primitive::RectOutline { x: 2.0, y: 3.0, w: 9.0, h: 12.0, width: 2.0 },
        ];
        for p in &prims {
            let once = GrayImage::white(20, 20).draw(p);
            assert_eq!(once.draw(p), once);
        }
    }
}
