//! Cross-tile duplicate removal.
//!
//! Two detections overlap when their intersection exceeds a fraction of the
//! *smaller* box's area. Of an overlapping pair the higher-scoring one is
//! kept; when the scores are within `score_tie_epsilon` the larger box is
//! kept instead.
//!
//! Detections are first put in a total order (score desc, area desc, x asc,
//! y asc, class asc, then w and h) and pairs are examined in lexicographic
//! order of that ranking, so the result does not depend on input order.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::overlap_fraction_unchecked;
use crate::head::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub overlap_threshold: f64,
    pub score_tie_epsilon: f64,
    pub per_class: bool,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            overlap_threshold: 0.10,
            score_tie_epsilon: 0.05,
            per_class: true,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "overlap_threshold {} outside (0, 1]",
                self.overlap_threshold
            )));
        }
        if self.score_tie_epsilon.is_nan() || self.score_tie_epsilon < 0.0 {
            return Err(Error::invalid(format!(
                "score_tie_epsilon {} is negative",
                self.score_tie_epsilon
            )));
        }
        Ok(())
    }
}

/// The ranking used by merging and by AP tie-breaking.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.bbox.area().total_cmp(&a.bbox.area()))
        .then_with(|| a.bbox.x.total_cmp(&b.bbox.x))
        .then_with(|| a.bbox.y.total_cmp(&b.bbox.y))
        .then_with(|| a.class_id.cmp(&b.class_id))
        .then_with(|| a.bbox.w.total_cmp(&b.bbox.w))
        .then_with(|| a.bbox.h.total_cmp(&b.bbox.h))
}

pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(detection_order);
}

/// Removes duplicate detections; survivors are returned unchanged, ranked.
pub fn merge_detections(dets: &[Detection], cfg: &MergeConfig) -> Vec<Detection> {
    let mut ranked = dets.to_vec();
    sort_detections(&mut ranked);
    let n = ranked.len();
    let mut alive = vec![true; n];
    // A single lexicographic sweep reaches the same fixpoint as restarting
    // from the first overlapping pair after every removal: removals never
    // create new overlaps among the pairs already passed.
    for i in 0..n {
        if !alive[i] {
            continue;
        }
        for j in i + 1..n {
            if !alive[j] {
                continue;
            }
            let (a, b) = (&ranked[i], &ranked[j]);
            if cfg.per_class && a.class_id != b.class_id {
                continue;
            }
            if overlap_fraction_unchecked(&a.bbox, &b.bbox) <= cfg.overlap_threshold {
                continue;
            }
            let drop_first = (a.score - b.score).abs() <= cfg.score_tie_epsilon
                && b.bbox.area() > a.bbox.area();
            if drop_first {
                alive[i] = false;
                break;
            }
            alive[j] = false;
        }
    }
    ranked
        .into_iter()
        .zip(alive)
        .filter_map(|(d, keep)| keep.then_some(d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{overlap_fraction_of_smaller, BBox};

    fn det(x: f64, y: f64, w: f64, h: f64, score: f64) -> Detection {
        Detection { class_id: 0, bbox: BBox::new(x, y, w, h), score }
    }

    #[test]
    fn higher_score_wins_when_scores_differ() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9);
        let b = det(5.0, 0.0, 10.0, 10.0, 0.6);
        assert_eq!(overlap_fraction_of_smaller(&a.bbox, &b.bbox).unwrap(), 0.5);
        assert_eq!(merge_detections(&[b, a], &MergeConfig::default()), vec![a]);
    }

    #[test]
    fn larger_box_wins_when_scores_are_close() {
        let big = det(0.0, 0.0, 20.0, 20.0, 0.78);
        let small = det(15.0, 0.0, 10.0, 10.0, 0.80);
        assert_eq!(overlap_fraction_of_smaller(&big.bbox, &small.bbox).unwrap(), 0.5);
        assert_eq!(merge_detections(&[small, big], &MergeConfig::default()), vec![big]);
    }

    #[test]
    fn below_threshold_both_kept() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9);
        let b = det(9.5, 0.0, 10.0, 10.0, 0.6);
        assert!((overlap_fraction_of_smaller(&a.bbox, &b.bbox).unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(merge_detections(&[a, b], &MergeConfig::default()).len(), 2);
    }

    #[test]
    fn classes_kept_apart_unless_disabled() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9);
        let b = Detection { class_id: 1, ..det(1.0, 0.0, 10.0, 10.0, 0.8) };
        assert_eq!(merge_detections(&[a, b], &MergeConfig::default()).len(), 2);
        let cross = MergeConfig { per_class: false, ..Default::default() };
        assert_eq!(merge_detections(&[a, b], &cross), vec![a]);
    }

    #[test]
    fn duplicates_collapse() {
        let a = det(3.0, 4.0, 10.0, 10.0, 0.7);
        assert_eq!(merge_detections(&vec![a; 7], &MergeConfig::default()), vec![a]);
        assert!(merge_detections(&[], &MergeConfig::default()).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(MergeConfig::default().validate().is_ok());
        assert!(MergeConfig { overlap_threshold: 0.0, ..Default::default() }.validate().is_err());
        assert!(MergeConfig { score_tie_epsilon: -0.1, ..Default::default() }.validate().is_err());
    }

    fn arb_dets() -> impl proptest::strategy::Strategy<Value = Vec<Detection>> {
        use proptest::prelude::*;
        proptest::collection::vec(
            (0u8..60, 0u8..60, 1u8..30, 1u8..30, 0u8..20, 0usize..2),
            0..25,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(x, y, w, h, s, c)| Detection {
                    class_id: c,
                    bbox: BBox::new(x as f64, y as f64, w as f64, h as f64),
                    score: s as f64 / 20.0,
                })
                .collect()
        })
    }

    proptest::proptest! {
        #[test]
        fn merge_invariants(dets in arb_dets(), rot in 0usize..25) {
            let cfg = MergeConfig::default();
            let out = merge_detections(&dets, &cfg);
            for (i, a) in out.iter().enumerate() {
                proptest::prop_assert!(dets.contains(a));
                for b in &out[i + 1..] {
                    if a.class_id == b.class_id {
                        proptest::prop_assert!(overlap_fraction_unchecked(&a.bbox, &b.bbox) <= cfg.overlap_threshold);
                    }
                }
            }
            proptest::prop_assert_eq!(merge_detections(&out, &cfg), out.clone());
            let mut shuffled = dets.clone();
            if !shuffled.is_empty() {
                let k = rot % shuffled.len();
                shuffled.rotate_left(k);
                shuffled.reverse();
            }
            proptest::prop_assert_eq!(merge_detections(&shuffled, &cfg), out);
        }
    }
}
