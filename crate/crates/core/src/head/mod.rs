//! Grid detection head: the raw prediction tensor, its decoding into
//! scored boxes, the exact inverse used by the oracle backend, and the
//! training loss with analytic gradients.
//!
//! Per cell `(i, j)` and anchor `a` with prior `(p_w, p_h)` the channels are
//! `(tx, ty, tw, th, to, c_1 .. c_C)` and decode as
//!
//! ```text
//! cx = (σ(tx) + j) · net/grid_w      w = p_w · exp(tw)
//! cy = (σ(ty) + i) · net/grid_h      h = p_h · exp(th)
//! score = σ(to) · max softmax(c)
//! ```

mod loss;

use serde::{Deserialize, Serialize};

pub use loss::{loss_and_grad, LossOutput, LossTerms, LossWeights};

use crate::anchors::AnchorSet;
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Objectness logit written into empty slots by [`encode_detections`].
pub const EMPTY_OBJECTNESS_LOGIT: f64 = -20.0;
/// Margin of the one-hot class logit written by [`encode_detections`].
pub const CLASS_LOGIT_MARGIN: f64 = 40.0;
const OFFSET_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub num_classes: usize,
    pub anchors: AnchorSet,
    pub net_size: f64,
}

impl HeadConfig {
    pub fn new(grid_h: usize, grid_w: usize, num_classes: usize, anchors: AnchorSet, net_size: f64) -> Result<Self> {
        let cfg = HeadConfig {
            grid_h,
            grid_w,
            num_classes,
            anchors,
            net_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_h == 0 || self.grid_w == 0 {
            return Err(Error::invalid(format!("grid {}x{} is empty", self.grid_h, self.grid_w)));
        }
        if self.num_classes == 0 {
            return Err(Error::invalid("head needs at least one class"));
        }
        if self.anchors.is_empty() {
            return Err(Error::invalid("head needs at least one anchor"));
        }
        if self.net_size.is_nan() || self.net_size <= 0.0 {
            return Err(Error::invalid(format!("net_size {} is not positive", self.net_size)));
        }
        Ok(())
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    /// Channels per anchor: four box offsets, objectness, class logits.
    pub fn stride(&self) -> usize {
        5 + self.num_classes
    }

    pub fn channels(&self) -> usize {
        self.num_anchors() * self.stride()
    }

    pub fn cell_w(&self) -> f64 {
        self.net_size / self.grid_w as f64
    }

    pub fn cell_h(&self) -> f64 {
        self.net_size / self.grid_h as f64
    }

    pub fn zeros(&self) -> RawPrediction {
        RawPrediction::zeros(self.grid_h, self.grid_w, self.channels())
    }

    pub(crate) fn offset(&self, slot: Slot) -> usize {
        (slot.row * self.grid_w + slot.col) * self.channels() + slot.anchor * self.stride()
    }

    pub(crate) fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        (0..self.grid_h).flat_map(move |row| {
            (0..self.grid_w).flat_map(move |col| (0..self.num_anchors()).map(move |anchor| Slot { row, col, anchor }))
        })
    }

    /// Cell containing a network-space point (clamped onto the grid) and the
    /// fractional offsets inside that cell.
    pub(crate) fn locate(&self, cx: f64, cy: f64) -> (usize, usize, f64, f64) {
        let gx = cx / self.cell_w();
        let gy = cy / self.cell_h();
        let col = (gx.floor().max(0.0) as usize).min(self.grid_w - 1);
        let row = (gy.floor().max(0.0) as usize).min(self.grid_h - 1);
        (row, col, gx - col as f64, gy - row as f64)
    }

    /// The slot responsible for a box: containing cell, best-IoU prior.
    pub fn slot_for(&self, b: &BBox) -> Slot {
        let (cx, cy) = b.center();
        let (row, col, _, _) = self.locate(cx, cy);
        Slot {
            row,
            col,
            anchor: self.anchors.best_match(b.w, b.h),
        }
    }
}

/// One `(cell, anchor)` position in the prediction tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Slot {
    pub row: usize,
    pub col: usize,
    pub anchor: usize,
}

impl std::fmt::Display for Slot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cell ({}, {}) anchor {}", self.row, self.col, self.anchor)
    }
}

/// Row-major `[grid_h, grid_w, channels]` tensor of raw network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub grid_h: usize,
    pub grid_w: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl RawPrediction {
    pub fn zeros(grid_h: usize, grid_w: usize, channels: usize) -> Self {
        RawPrediction {
            grid_h,
            grid_w,
            channels,
            values: vec![0.0; grid_h * grid_w * channels],
        }
    }

    pub fn from_values(grid_h: usize, grid_w: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid_h * grid_w * channels {
            return Err(Error::invalid(format!(
                "{} values for a {grid_h}x{grid_w}x{channels} tensor",
                values.len()
            )));
        }
        Ok(RawPrediction {
            grid_h,
            grid_w,
            channels,
            values,
        })
    }

    pub fn check_shape(&self, cfg: &HeadConfig) -> Result<()> {
        if (self.grid_h, self.grid_w, self.channels) != (cfg.grid_h, cfg.grid_w, cfg.channels())
            || self.values.len() != self.grid_h * self.grid_w * self.channels
        {
            return Err(Error::invalid(format!(
                "tensor shape {}x{}x{} does not match head {}x{}x{}",
                self.grid_h,
                self.grid_w,
                self.channels,
                cfg.grid_h,
                cfg.grid_w,
                cfg.channels()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A scored, class-labelled box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Box a slot predicts, in network coordinates.
pub(crate) fn slot_box(cfg: &HeadConfig, v: &[f64], slot: Slot) -> BBox {
    let (pw, ph) = cfg.anchors.get(slot.anchor);
    let cx = (sigmoid(v[0]) + slot.col as f64) * cfg.cell_w();
    let cy = (sigmoid(v[1]) + slot.row as f64) * cfg.cell_h();
    BBox::from_center(cx, cy, pw * v[2].exp(), ph * v[3].exp())
}

/// Decodes every slot whose score reaches `score_threshold`.
///
/// Output is in network coordinates, ordered by cell (row-major) then anchor.
pub fn decode(raw: &RawPrediction, cfg: &HeadConfig, score_threshold: f64) -> Result<Vec<Detection>> {
    raw.check_shape(cfg)?;
    let stride = cfg.stride();
    let mut out = Vec::new();
    for slot in cfg.slots() {
        let base = cfg.offset(slot);
        let v = &raw.values[base..base + stride];
        let objectness = sigmoid(v[4]);
        let probs = softmax(&v[5..]);
        let (class_id, p) = probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (c, &p)| if p > best.1 { (c, p) } else { best });
        let score = objectness * p;
        if score >= score_threshold {
            out.push(Detection {
                class_id,
                bbox: slot_box(cfg, v, slot),
                score,
            });
        }
    }
    Ok(out)
}

fn check_encodable(d: &Detection, cfg: &HeadConfig) -> Result<()> {
    let (cx, cy) = d.bbox.center();
    let n = cfg.net_size;
    if !(d.bbox.is_valid() && (0.0..n).contains(&cx) && (0.0..n).contains(&cy)) {
        return Err(Error::invalid(format!(
            "detection box {:?} is degenerate or centered outside [0, {n})",
            d.bbox
        )));
    }
    if !(d.score > 0.0 && d.score < 1.0) {
        return Err(Error::invalid(format!("detection score {} outside (0, 1)", d.score)));
    }
    if d.class_id >= cfg.num_classes {
        return Err(Error::invalid(format!(
            "class {} but the head has {} classes",
            d.class_id, cfg.num_classes
        )));
    }
    Ok(())
}

/// Writes detections into a raw tensor that [`decode`] maps back onto them.
///
/// Each detection occupies the slot returned by [`HeadConfig::slot_for`];
/// two detections competing for one slot is a capacity error.
pub fn encode_detections(dets: &[Detection], cfg: &HeadConfig) -> Result<RawPrediction> {
    cfg.validate()?;
    let mut raw = cfg.zeros();
    let stride = cfg.stride();
    for slot in cfg.slots() {
        raw.values[cfg.offset(slot) + 4] = EMPTY_OBJECTNESS_LOGIT;
    }
    let mut taken = std::collections::BTreeMap::new();
    for (k, d) in dets.iter().enumerate() {
        check_encodable(d, cfg)?;
        let slot = cfg.slot_for(&d.bbox);
        if let Some(prev) = taken.insert(slot, k) {
            return Err(Error::Capacity(format!(
                "detections #{prev} and #{k} both map to {slot}"
            )));
        }
        let (cx, cy) = d.bbox.center();
        let (_, _, fx, fy) = cfg.locate(cx, cy);
        let (pw, ph) = cfg.anchors.get(slot.anchor);
        let base = cfg.offset(slot);
        let v = &mut raw.values[base..base + stride];
        v[0] = logit(fx.clamp(OFFSET_CLAMP, 1.0 - OFFSET_CLAMP));
        v[1] = logit(fy.clamp(OFFSET_CLAMP, 1.0 - OFFSET_CLAMP));
        v[2] = (d.bbox.w / pw).ln();
        v[3] = (d.bbox.h / ph).ln();
        v[4] = logit(d.score);
        v[5 + d.class_id] = CLASS_LOGIT_MARGIN;
    }
    Ok(raw)
}
