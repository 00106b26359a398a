//! Sum-of-squares localization and objectness loss with a cross-entropy
//! class term, and its exact gradient with respect to every raw entry.
//!
//! ```text
//! L = λ_coord Σ_resp [(σ(tx)-t̂x)² + (σ(ty)-t̂y)² + (tw-t̂w)² + (th-t̂h)²]
//!   + λ_obj   Σ_resp (σ(to) - 1)²
//!   + λ_noobj Σ_free σ(to)²
//!   + λ_class Σ_resp CE(softmax(c), class)
//! ```
//!
//! `free` slots are the non-responsible ones whose predicted box overlaps
//! every positive truth with IoU below `ignore_iou` and whose center is not
//! inside an ignore region. That gating is treated as a constant mask.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{sigmoid, slot_box, softmax, HeadConfig, RawPrediction, Slot};
use crate::error::Result;
use crate::geometry::iou_unchecked;
use crate::tiler::Annotation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub coord: f64,
    pub obj: f64,
    pub noobj: f64,
    pub class: f64,
    /// Predictions overlapping a truth at least this much are not pushed
    /// towards "no object".
    pub ignore_iou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            coord: 5.0,
            obj: 1.0,
            noobj: 0.5,
            class: 1.0,
            ignore_iou: 0.6,
        }
    }
}

/// Weighted contribution of each term to the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub coord: f64,
    pub obj: f64,
    pub noobj: f64,
    pub class: f64,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub terms: LossTerms,
    /// Same shape as the input tensor.
    pub grad: RawPrediction,
}

struct Target {
    tx: f64,
    ty: f64,
    tw: f64,
    th: f64,
    class_id: usize,
    area: f64,
}

/// Assigns each positive truth to its slot. When two truths claim the same
/// slot the larger one keeps it (first in input order on equal area).
fn responsibilities(truth: &[Annotation], cfg: &HeadConfig) -> BTreeMap<Slot, Target> {
    let mut out: BTreeMap<Slot, Target> = BTreeMap::new();
    for a in truth.iter().filter(|a| !a.ignore && a.class_id < cfg.num_classes && a.bbox.is_valid()) {
        let slot = cfg.slot_for(&a.bbox);
        let (cx, cy) = a.bbox.center();
        let (_, _, fx, fy) = cfg.locate(cx, cy);
        let (pw, ph) = cfg.anchors.get(slot.anchor);
        let t = Target {
            tx: fx,
            ty: fy,
            tw: (a.bbox.w / pw).ln(),
            th: (a.bbox.h / ph).ln(),
            class_id: a.class_id,
            area: a.bbox.area(),
        };
        match out.get(&slot) {
            Some(prev) if prev.area >= t.area => {}
            _ => {
                out.insert(slot, t);
            }
        }
    }
    out
}

pub fn loss_and_grad(
    raw: &RawPrediction,
    truth: &[Annotation],
    cfg: &HeadConfig,
    weights: &LossWeights,
) -> Result<LossOutput> {
    raw.check_shape(cfg)?;
    let stride = cfg.stride();
    let resp = responsibilities(truth, cfg);
    let positives: Vec<_> = truth.iter().filter(|a| !a.ignore && a.bbox.is_valid()).map(|a| a.bbox).collect();
    let ignores: Vec<_> = truth.iter().filter(|a| a.ignore && a.bbox.is_valid()).map(|a| a.bbox).collect();

    let mut grad = RawPrediction::zeros(raw.grid_h, raw.grid_w, raw.channels);
    let mut terms = LossTerms::default();

    for slot in cfg.slots() {
        let base = cfg.offset(slot);
        let v = &raw.values[base..base + stride];
        let g = &mut grad.values[base..base + stride];
        let so = sigmoid(v[4]);
        let dso = so * (1.0 - so);

        if let Some(t) = resp.get(&slot) {
            let sx = sigmoid(v[0]);
            let sy = sigmoid(v[1]);
            let (rx, ry) = (sx - t.tx, sy - t.ty);
            let (rw, rh) = (v[2] - t.tw, v[3] - t.th);
            let lc = weights.coord;
            terms.coord += lc * (rx * rx + ry * ry + rw * rw + rh * rh);
            g[0] = lc * 2.0 * rx * sx * (1.0 - sx);
            g[1] = lc * 2.0 * ry * sy * (1.0 - sy);
            g[2] = lc * 2.0 * rw;
            g[3] = lc * 2.0 * rh;

            terms.obj += weights.obj * (so - 1.0) * (so - 1.0);
            g[4] = weights.obj * 2.0 * (so - 1.0) * dso;

            let logits = &v[5..];
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|c| (c - m).exp()).sum::<f64>().ln();
            terms.class += weights.class * (lse - logits[t.class_id]);
            for (k, p) in softmax(logits).into_iter().enumerate() {
                let onehot = if k == t.class_id { 1.0 } else { 0.0 };
                g[5 + k] = weights.class * (p - onehot);
            }
        } else {
            let pred = slot_box(cfg, v, slot);
            let best = positives.iter().map(|b| iou_unchecked(&pred, b)).fold(0.0, f64::max);
            let (pcx, pcy) = pred.center();
            let in_ignore = ignores.iter().any(|b| b.contains_point(pcx, pcy));
            if best < weights.ignore_iou && !in_ignore {
                terms.noobj += weights.noobj * so * so;
                g[4] = weights.noobj * 2.0 * so * dso;
            }
        }
    }
    Ok(LossOutput {
        loss: terms.coord + terms.obj + terms.noobj + terms.class,
        terms,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::AnchorSet;
    use crate::geometry::BBox;
    use crate::head::{encode_detections, Detection};

    fn cfg() -> HeadConfig {
        HeadConfig::new(2, 2, 3, AnchorSet::new(vec![[10.0, 12.0], [30.0, 20.0]]).unwrap(), 64.0).unwrap()
    }

    #[test]
    fn empty_truth_near_zero_loss() {
        let c = cfg();
        let raw = encode_detections(&[], &c).unwrap();
        let out = loss_and_grad(&raw, &[], &c, &LossWeights::default()).unwrap();
        let slots = (c.grid_h * c.grid_w * c.num_anchors()) as f64;
        assert!(out.loss >= 0.0 && out.loss / slots < 1e-8, "{}", out.loss);
    }

    #[test]
    fn perfect_prediction_has_zero_coord_and_class_terms() {
        let c = cfg();
        let truth = vec![
            Annotation::new(1, "b", BBox::new(3.0, 4.0, 11.0, 13.0)),
            Annotation::new(2, "c", BBox::new(30.0, 35.0, 28.0, 22.0)),
        ];
        let dets: Vec<Detection> = truth
            .iter()
            .map(|a| Detection { class_id: a.class_id, bbox: a.bbox, score: 1.0 - 1e-12 })
            .collect();
        let raw = encode_detections(&dets, &c).unwrap();
        let out = loss_and_grad(&raw, &truth, &c, &LossWeights::default()).unwrap();
        assert!(out.terms.coord.abs() < 1e-9, "{:?}", out.terms);
        assert!(out.terms.class.abs() < 1e-9, "{:?}", out.terms);
        assert!(out.loss < 1e-9, "{:?}", out.terms);
    }

    #[test]
    fn ignore_regions_suppress_noobj() {
        let c = HeadConfig::new(1, 1, 1, AnchorSet::new(vec![[10.0, 10.0]]).unwrap(), 100.0).unwrap();
        let raw = c.zeros(); // predicts a 10x10 box centered at (50, 50), objectness 0.5
        let w = LossWeights::default();
        let free = loss_and_grad(&raw, &[], &c, &w).unwrap();
        assert!((free.terms.noobj - 0.5 * 0.25).abs() < 1e-12);
        let mut ign = Annotation::new(0, "x", BBox::new(40.0, 40.0, 20.0, 20.0));
        ign.ignore = true;
        let masked = loss_and_grad(&raw, &[ign], &c, &w).unwrap();
        assert_eq!(masked.loss, 0.0);
        assert!(masked.grad.values.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn larger_truth_wins_shared_slot() {
        let c = HeadConfig::new(1, 1, 2, AnchorSet::new(vec![[10.0, 10.0]]).unwrap(), 100.0).unwrap();
        let truth = vec![
            Annotation::new(0, "a", BBox::from_center(40.0, 40.0, 8.0, 8.0)),
            Annotation::new(1, "b", BBox::from_center(60.0, 60.0, 12.0, 12.0)),
        ];
        let r = responsibilities(&truth, &c);
        assert_eq!(r.len(), 1);
        assert_eq!(r.values().next().unwrap().class_id, 1);
    }

    #[test]
    fn shape_mismatch() {
        let c = cfg();
        assert!(loss_and_grad(&RawPrediction::zeros(2, 2, 3), &[], &c, &LossWeights::default()).is_err());
    }
}
