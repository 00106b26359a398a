//! Axis-aligned boxes and the transforms between plan, tile and network space.
//!
//! Boxes are half-open continuous regions `[x, x + w) × [y, y + h)` with the
//! origin at the image top-left, x growing right and y growing down. On
//! integer coordinates the continuous area of a box equals its pixel count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in pixel units (top-left corner plus size).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    /// Builds a box from its center and size.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    /// Builds a box from its corners `(x0, y0)` and `(x1, y1)`.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// True when both sides are strictly positive and every field is finite.
    pub fn is_valid(&self) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "degenerate box (x={}, y={}, w={}, h={})",
                self.x, self.y, self.w, self.h
            )))
        }
    }

    /// Area of the intersection; zero for disjoint or touching boxes.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// Point membership under the half-open convention.
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn scale(&self, factor: f64) -> BBox {
        BBox::new(self.x * factor, self.y * factor, self.w * factor, self.h * factor)
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(iou_unchecked(a, b))
}

pub(crate) fn iou_unchecked(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection area as a fraction of the smaller box's area.
///
/// This is the overlap measure used to merge duplicate detections coming
/// from neighbouring tiles.
pub fn overlap_fraction_of_smaller(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(overlap_fraction_unchecked(a, b))
}

pub(crate) fn overlap_fraction_unchecked(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / a.area().min(b.area())).clamp(0.0, 1.0)
}

/// Placement of one square tile in plan space.
///
/// `side` is the tile side in plan pixels, `net_size` the side of the
/// network input the tile is resampled to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileFrame {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
    pub net_size: f64,
}

impl TileFrame {
    pub fn new(x0: f64, y0: f64, side: f64, net_size: f64) -> Self {
        TileFrame {
            x0,
            y0,
            side,
            net_size,
        }
    }

    /// Plan pixels per network pixel.
    pub fn scale(&self) -> f64 {
        self.side / self.net_size
    }

    /// The tile's footprint in plan space.
    pub fn bounds(&self) -> BBox {
        BBox::new(self.x0, self.y0, self.side, self.side)
    }
}

/// Maps a box from network-input coordinates of a tile back to plan space.
pub fn tile_to_plan(b: &BBox, frame: &TileFrame) -> BBox {
    b.scale(frame.scale()).translate(frame.x0, frame.y0)
}

/// Maps a plan-space box into the network-input coordinates of a tile.
pub fn plan_to_tile(b: &BBox, frame: &TileFrame) -> BBox {
    b.translate(-frame.x0, -frame.y0).scale(1.0 / frame.scale())
}
