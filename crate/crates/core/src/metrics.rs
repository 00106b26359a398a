//! Detection metrics (AP at IoU thresholds, mAP over 0.50:0.05:0.95) and
//! symbol-spotting metrics (instance-wise and pixel-wise precision, recall
//! and F-score).
//!
//! Evaluation runs over a set of images; detections only ever match truths
//! of the same image. Ignore-flagged truths are invisible to every metric.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, BBox};
use crate::head::Detection;
use crate::merger::detection_order;
use crate::tiler::Annotation;
use crate::util::sig6;

/// IoU thresholds averaged into mAP.
pub fn map_thresholds() -> impl Iterator<Item = f64> {
    (0..10).map(|k| 0.5 + 0.05 * k as f64)
}

/// Detections and truths of one image, in plan coordinates.
#[derive(Debug, Clone, Default)]
pub struct ImageEval {
    pub detections: Vec<Detection>,
    pub truths: Vec<Annotation>,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f_score,
        }
    }

    /// Precision `hits_p / retrieved` and recall `hits_r / relevant`;
    /// both empty scores 1, exactly one empty scores 0.
    fn from_counts(hits_p: f64, retrieved: f64, hits_r: f64, relevant: f64) -> Self {
        match (retrieved > 0.0, relevant > 0.0) {
            (false, false) => Prf::new(1.0, 1.0),
            (true, true) => Prf::new(hits_p / retrieved, hits_r / relevant),
            _ => Prf::new(0.0, 0.0),
        }
    }

    fn rounded(&self) -> Prf {
        Prf {
            precision: sig6(self.precision),
            recall: sig6(self.recall),
            f_score: sig6(self.f_score),
        }
    }
}

fn check_class(class_id: usize, num_classes: usize) -> Result<()> {
    if class_id >= num_classes {
        return Err(Error::invalid(format!(
            "class {class_id} unknown ({num_classes} classes)"
        )));
    }
    Ok(())
}

/// All-point interpolated AP of one class at one IoU threshold, pooled over
/// images.
pub fn average_precision_pooled(
    images: &[ImageEval],
    class_id: usize,
    iou_threshold: f64,
    num_classes: usize,
) -> Result<f64> {
    check_class(class_id, num_classes)?;
    let mut ranked: Vec<(usize, Detection)> = images
        .iter()
        .enumerate()
        .flat_map(|(k, im)| im.detections.iter().filter(|d| d.class_id == class_id).map(move |d| (k, *d)))
        .collect();
    ranked.sort_by(|a, b| detection_order(&a.1, &b.1).then(a.0.cmp(&b.0)));

    let truths: Vec<Vec<&BBox>> = images
        .iter()
        .map(|im| im.truths.iter().filter(|t| t.class_id == class_id && !t.ignore).map(|t| &t.bbox).collect())
        .collect();
    let ignores: Vec<Vec<&BBox>> = images
        .iter()
        .map(|im| im.truths.iter().filter(|t| t.class_id == class_id && t.ignore).map(|t| &t.bbox).collect())
        .collect();
    let n_truth: usize = truths.iter().map(Vec::len).sum();
    let mut matched: Vec<Vec<bool>> = truths.iter().map(|t| vec![false; t.len()]).collect();

    let mut hits = Vec::with_capacity(ranked.len());
    for (k, d) in &ranked {
        let mut best: Option<(usize, f64)> = None;
        for (ti, t) in truths[*k].iter().enumerate() {
            if matched[*k][ti] {
                continue;
            }
            let v = iou_unchecked(&d.bbox, t);
            if v >= iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((ti, v));
            }
        }
        match best {
            Some((ti, _)) => {
                matched[*k][ti] = true;
                hits.push(true);
            }
            None if ignores[*k].iter().any(|g| iou_unchecked(&d.bbox, g) >= iou_threshold) => {}
            None => hits.push(false),
        }
    }

    if n_truth == 0 {
        return Ok(if hits.is_empty() { 1.0 } else { 0.0 });
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_truth as f64);
    }
    // precision envelope, right to left
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    Ok(ap.clamp(0.0, 1.0))
}

/// AP of one class on a single image.
pub fn average_precision(
    dets: &[Detection],
    truths: &[Annotation],
    class_id: usize,
    iou_threshold: f64,
    num_classes: usize,
) -> Result<f64> {
    let image = ImageEval {
        detections: dets.to_vec(),
        truths: truths.to_vec(),
        ..Default::default()
    };
    average_precision_pooled(std::slice::from_ref(&image), class_id, iou_threshold, num_classes)
}

/// Instance-wise scores: a detection is correct when it touches any
/// same-class truth; a truth is found when any same-class detection
/// touches it.
pub fn instance_prf_pooled(images: &[ImageEval]) -> Prf {
    let (mut tp, mut n_det, mut recalled, mut n_truth) = (0usize, 0usize, 0usize, 0usize);
    for im in images {
        let truths: Vec<&Annotation> = im.truths.iter().filter(|t| !t.ignore).collect();
        let touches = |d: &Detection, t: &Annotation| d.class_id == t.class_id && d.bbox.intersection_area(&t.bbox) > 0.0;
        n_det += im.detections.len();
        n_truth += truths.len();
        tp += im.detections.iter().filter(|d| truths.iter().any(|t| touches(d, t))).count();
        recalled += truths.iter().filter(|t| im.detections.iter().any(|d| touches(d, t))).count();
    }
    Prf::from_counts(tp as f64, n_det as f64, recalled as f64, n_truth as f64)
}

pub fn instance_prf(dets: &[Detection], truths: &[Annotation]) -> Prf {
    instance_prf_pooled(&[ImageEval {
        detections: dets.to_vec(),
        truths: truths.to_vec(),
        ..Default::default()
    }])
}

/// Half-open integer pixel rectangle `[x0, x1) × [y0, y1)`.
pub type PixelRect = (i64, i64, i64, i64);

/// Pixels whose centers lie inside the box, clipped to the plan.
pub fn box_pixels(b: &BBox, width: usize, height: usize) -> Option<PixelRect> {
    let x0 = ((b.x - 0.5).ceil() as i64).max(0);
    let y0 = ((b.y - 0.5).ceil() as i64).max(0);
    let x1 = ((b.right() - 0.5).ceil() as i64).min(width as i64);
    let y1 = ((b.bottom() - 0.5).ceil() as i64).min(height as i64);
    (x1 > x0 && y1 > y0).then_some((x0, y0, x1, y1))
}

/// Exact area of a union of rectangles by a sweep over compressed x
/// coordinates, merging y-intervals in each slab.
pub fn union_area(rects: &[PixelRect]) -> u64 {
    let mut xs: Vec<i64> = rects.iter().flat_map(|r| [r.0, r.2]).collect();
    xs.sort_unstable();
    xs.dedup();
    let mut total = 0u64;
    let mut spans: Vec<(i64, i64)> = Vec::new();
    for slab in xs.windows(2) {
        let (xa, xb) = (slab[0], slab[1]);
        spans.clear();
        spans.extend(rects.iter().filter(|r| r.0 <= xa && r.2 >= xb).map(|r| (r.1, r.3)));
        if spans.is_empty() {
            continue;
        }
        spans.sort_unstable();
        let mut covered = 0i64;
        let (mut lo, mut hi) = spans[0];
        for &(a, b) in &spans[1..] {
            if a > hi {
                covered += hi - lo;
                lo = a;
                hi = b;
            } else {
                hi = hi.max(b);
            }
        }
        covered += hi - lo;
        total += (covered * (xb - xa)) as u64;
    }
    total
}

fn intersect(a: &PixelRect, b: &PixelRect) -> Option<PixelRect> {
    let r = (a.0.max(b.0), a.1.max(b.1), a.2.min(b.2), a.3.min(b.3));
    (r.2 > r.0 && r.3 > r.1).then_some(r)
}

/// Pixel counts `(retrieved ∩ relevant, retrieved, relevant)` for one image,
/// summed over classes.
pub fn pixel_counts(im: &ImageEval) -> (u64, u64, u64) {
    let mut classes: Vec<usize> = im
        .detections
        .iter()
        .map(|d| d.class_id)
        .chain(im.truths.iter().filter(|t| !t.ignore).map(|t| t.class_id))
        .collect();
    classes.sort_unstable();
    classes.dedup();
    let (mut inter, mut retrieved, mut relevant) = (0, 0, 0);
    for c in classes {
        let dr: Vec<PixelRect> = im
            .detections
            .iter()
            .filter(|d| d.class_id == c)
            .filter_map(|d| box_pixels(&d.bbox, im.width, im.height))
            .collect();
        let tr: Vec<PixelRect> = im
            .truths
            .iter()
            .filter(|t| t.class_id == c && !t.ignore)
            .filter_map(|t| box_pixels(&t.bbox, im.width, im.height))
            .collect();
        let both: Vec<PixelRect> = dr.iter().flat_map(|d| tr.iter().filter_map(move |t| intersect(d, t))).collect();
        inter += union_area(&both);
        retrieved += union_area(&dr);
        relevant += union_area(&tr);
    }
    (inter, retrieved, relevant)
}

pub fn pixel_prf_pooled(images: &[ImageEval]) -> Prf {
    let (mut inter, mut retrieved, mut relevant) = (0u64, 0u64, 0u64);
    for im in images {
        let (i, r, l) = pixel_counts(im);
        inter += i;
        retrieved += r;
        relevant += l;
    }
    Prf::from_counts(inter as f64, retrieved as f64, inter as f64, relevant as f64)
}

pub fn pixel_prf(dets: &[Detection], truths: &[Annotation], plan_width: usize, plan_height: usize) -> Prf {
    pixel_prf_pooled(&[ImageEval {
        detections: dets.to_vec(),
        truths: truths.to_vec(),
        width: plan_width,
        height: plan_height,
    }])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: usize,
    pub class_name: String,
    pub ap50: f64,
    pub ap75: f64,
    pub map: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(rename = "AP50")]
    pub ap50: f64,
    #[serde(rename = "AP75")]
    pub ap75: f64,
    #[serde(rename = "mAP")]
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassReport>,
    pub aggregate: Aggregate,
    pub instance: Prf,
    pub pixel: Prf,
}

/// Full report over every class of the dataset; aggregates are macro means
/// over classes.
pub fn evaluate(images: &[ImageEval], class_names: &[String]) -> Result<EvalReport> {
    let n = class_names.len();
    if n == 0 {
        return Err(Error::invalid("evaluation needs at least one class"));
    }
    let mut per_class = Vec::with_capacity(n);
    for (c, name) in class_names.iter().enumerate() {
        let ap50 = average_precision_pooled(images, c, 0.5, n)?;
        let ap75 = average_precision_pooled(images, c, 0.75, n)?;
        let mut sum = 0.0;
        for t in map_thresholds() {
            sum += average_precision_pooled(images, c, t, n)?;
        }
        per_class.push(ClassReport {
            class_id: c,
            class_name: name.clone(),
            ap50,
            ap75,
            map: sum / 10.0,
        });
    }
    let mean = |f: fn(&ClassReport) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    let aggregate = Aggregate {
        ap50: mean(|c| c.ap50),
        ap75: mean(|c| c.ap75),
        map: mean(|c| c.map),
    };
    Ok(EvalReport {
        aggregate,
        per_class,
        instance: instance_prf_pooled(images),
        pixel: pixel_prf_pooled(images),
    })
}

impl EvalReport {
    /// Copy with every metric rounded to six significant digits.
    pub fn rounded(&self) -> EvalReport {
        EvalReport {
            per_class: self
                .per_class
                .iter()
                .map(|c| ClassReport {
                    ap50: sig6(c.ap50),
                    ap75: sig6(c.ap75),
                    map: sig6(c.map),
                    ..c.clone()
                })
                .collect(),
            aggregate: Aggregate {
                ap50: sig6(self.aggregate.ap50),
                ap75: sig6(self.aggregate.ap75),
                map: sig6(self.aggregate.map),
            },
            instance: self.instance.rounded(),
            pixel: self.pixel.rounded(),
        }
    }

    /// Plain-text tables in percent: one row per class with a closing
    /// aggregate row, then instance- and pixel-wise P/R/F.
    pub fn to_table(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|c| c.class_name.len())
            .max()
            .unwrap_or(0)
            .max("Symbol".len());
        let pct = |v: f64| format!("{:>8.2}", 100.0 * v);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$} {:>8} {:>8} {:>8}", "Symbol", "AP50", "AP75", "mAP");
        let _ = writeln!(s, "{}", "-".repeat(width + 27));
        for c in &self.per_class {
            let _ = writeln!(s, "{:<width$} {} {} {}", c.class_name, pct(c.ap50), pct(c.ap75), pct(c.map));
        }
        let _ = writeln!(s, "{}", "-".repeat(width + 27));
        let a = &self.aggregate;
        let _ = writeln!(s, "{:<width$} {} {} {}", "AP", pct(a.ap50), pct(a.ap75), pct(a.map));
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<8} {:>8} {:>8} {:>8}", "Eval.", "P", "R", "F");
        let _ = writeln!(s, "{}", "-".repeat(35));
        for (name, m) in [("Instance", &self.instance), ("Pixel", &self.pixel)] {
            let _ = writeln!(s, "{:<8} {} {} {}", name, pct(m.precision), pct(m.recall), pct(m.f_score));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(c: usize, x: f64, y: f64, w: f64, h: f64) -> Annotation {
        Annotation::new(c, format!("c{c}"), BBox::new(x, y, w, h))
    }

    fn det(c: usize, x: f64, y: f64, w: f64, h: f64, score: f64) -> Detection {
        Detection { class_id: c, bbox: BBox::new(x, y, w, h), score }
    }

    #[test]
    fn ap_perfect() {
        let truths = vec![ann(0, 0.0, 0.0, 10.0, 10.0), ann(0, 20.0, 20.0, 5.0, 8.0)];
        let dets: Vec<Detection> = truths.iter().map(|t| Detection { class_id: 0, bbox: t.bbox, score: 0.7 }).collect();
        for thr in [0.5, 0.75, 0.95, 1.0] {
            assert_eq!(average_precision(&dets, &truths, 0, thr, 1).unwrap(), 1.0);
        }
    }

    #[test]
    fn ap_fp_after_full_recall() {
        // det 1: IoU 0.8 with the truth, det 2: disjoint
        let truths = vec![ann(0, 0.0, 0.0, 10.0, 10.0)];
        let dets = vec![det(0, 0.0, 0.0, 10.0, 8.0, 0.9), det(0, 50.0, 50.0, 10.0, 10.0, 0.8)];
        assert!((iou_unchecked(&dets[0].bbox, &truths[0].bbox) - 0.8).abs() < 1e-12);
        assert_eq!(average_precision(&dets, &truths, 0, 0.5, 1).unwrap(), 1.0);
    }

    #[test]
    fn ap_half_recall() {
        let truths = vec![ann(0, 0.0, 0.0, 10.0, 10.0), ann(0, 30.0, 30.0, 10.0, 10.0)];
        let dets = vec![det(0, 0.0, 0.0, 10.0, 10.0, 0.9)];
        assert_eq!(average_precision(&dets, &truths, 0, 0.5, 1).unwrap(), 0.5);
    }

    #[test]
    fn ap_conventions_and_errors() {
        assert_eq!(average_precision(&[], &[], 0, 0.5, 1).unwrap(), 1.0);
        assert_eq!(average_precision(&[], &[ann(0, 0.0, 0.0, 1.0, 1.0)], 0, 0.5, 1).unwrap(), 0.0);
        assert_eq!(average_precision(&[det(0, 0.0, 0.0, 1.0, 1.0, 0.5)], &[], 0, 0.5, 1).unwrap(), 0.0);
        assert!(matches!(average_precision(&[], &[], 3, 0.5, 2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ap_ignores_ignore_regions() {
        let mut ign = ann(0, 50.0, 50.0, 10.0, 10.0);
        ign.ignore = true;
        let truths = vec![ann(0, 0.0, 0.0, 10.0, 10.0), ign];
        let dets = vec![det(0, 50.0, 50.0, 10.0, 10.0, 0.95), det(0, 0.0, 0.0, 10.0, 10.0, 0.5)];
        assert_eq!(average_precision(&dets, &truths, 0, 0.5, 1).unwrap(), 1.0);
    }

    #[test]
    fn ap_classic_pr_curve() {
        // TP, FP, TP over 2 truths: envelope 1 up to r=0.5, 2/3 up to r=1
        let truths = vec![ann(0, 0.0, 0.0, 10.0, 10.0), ann(0, 30.0, 0.0, 10.0, 10.0)];
        let dets = vec![
            det(0, 0.0, 0.0, 10.0, 10.0, 0.9),
            det(0, 80.0, 0.0, 10.0, 10.0, 0.8),
            det(0, 30.0, 0.0, 10.0, 10.0, 0.7),
        ];
        let ap = average_precision(&dets, &truths, 0, 0.5, 1).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn instance_examples() {
        let truths = vec![ann(0, 0.0, 0.0, 10.0, 10.0)];
        let exact = vec![det(0, 0.0, 0.0, 10.0, 10.0, 0.9)];
        assert_eq!(instance_prf(&exact, &truths), Prf::new(1.0, 1.0));
        let two = vec![det(0, 5.0, 5.0, 10.0, 10.0, 0.9), det(0, 40.0, 40.0, 5.0, 5.0, 0.8)];
        let m = instance_prf(&two, &truths);
        assert_eq!((m.precision, m.recall), (0.5, 1.0));
        assert!((m.f_score - 2.0 / 3.0).abs() < 1e-12);
        let three = vec![ann(0, 0.0, 0.0, 1.0, 1.0), ann(0, 5.0, 0.0, 1.0, 1.0), ann(1, 9.0, 0.0, 1.0, 1.0)];
        assert_eq!(instance_prf(&[], &three), Prf::new(0.0, 0.0));
        assert_eq!(instance_prf(&[], &[]), Prf::new(1.0, 1.0));
    }

    #[test]
    fn pixel_examples() {
        let truths = vec![ann(0, 5.0, 0.0, 10.0, 10.0)];
        let m = pixel_prf(&[det(0, 0.0, 0.0, 10.0, 10.0, 0.9)], &truths, 100, 100);
        assert_eq!((m.precision, m.recall, m.f_score), (0.5, 0.5, 0.5));
        let same = pixel_prf(&[det(0, 5.0, 0.0, 10.0, 10.0, 0.9)], &truths, 100, 100);
        assert_eq!(same, Prf::new(1.0, 1.0));
        let wrong = pixel_prf(&[det(1, 5.0, 0.0, 10.0, 10.0, 0.9)], &truths, 100, 100);
        assert_eq!((wrong.precision, wrong.recall), (0.0, 0.0));
    }

    #[test]
    fn box_pixels_rounds_to_centers() {
        assert_eq!(box_pixels(&BBox::new(10.0, 3.0, 5.0, 2.0), 100, 100), Some((10, 3, 15, 5)));
        assert_eq!(box_pixels(&BBox::new(9.9999999, 3.0000001, 5.0, 2.0), 100, 100), Some((10, 3, 15, 5)));
        assert_eq!(box_pixels(&BBox::new(-4.0, 98.0, 10.0, 10.0), 100, 100), Some((0, 98, 6, 100)));
        assert_eq!(box_pixels(&BBox::new(200.0, 0.0, 10.0, 10.0), 100, 100), None);
    }

    #[test]
    fn union_area_overlaps() {
        assert_eq!(union_area(&[]), 0);
        assert_eq!(union_area(&[(0, 0, 10, 10), (5, 5, 15, 15)]), 175);
        assert_eq!(union_area(&[(0, 0, 10, 10), (0, 0, 10, 10), (2, 2, 3, 3)]), 100);
        assert_eq!(union_area(&[(0, 0, 2, 2), (4, 0, 6, 2)]), 8);
    }

    #[test]
    fn report_table_shape() {
        let names = vec!["door".to_string(), "sink".to_string()];
        let im = ImageEval {
            detections: vec![det(0, 0.0, 0.0, 10.0, 10.0, 0.9)],
            truths: vec![ann(0, 0.0, 0.0, 10.0, 10.0)],
            width: 50,
            height: 50,
        };
        let r = evaluate(&[im], &names).unwrap();
        assert_eq!(r.aggregate.ap50, 1.0);
        let table = r.to_table();
        assert!(table.contains("door") && table.contains("Instance") && table.contains("Pixel"));
        assert!(table.lines().any(|l| l.starts_with("AP ") && l.contains("100.00")));
        let json = serde_json::to_string(&r.rounded()).unwrap();
        assert!(json.contains("\"AP50\":1.0"));
    }

    proptest::proptest! {
        #[test]
        fn ap_invariant_under_monotone_rescale(scores in proptest::collection::vec(0.01..0.99f64, 6)) {
            let truths: Vec<Annotation> = (0..4).map(|k| ann(0, 20.0 * k as f64, 0.0, 10.0, 10.0)).collect();
            let dets: Vec<Detection> = scores.iter().enumerate()
                .map(|(k, &s)| det(0, 20.0 * k as f64 + (k % 3) as f64 * 3.0, 0.0, 10.0, 10.0, s))
                .collect();
            let rescaled: Vec<Detection> = dets.iter().map(|d| Detection { score: d.score.powi(3) * 0.5, ..*d }).collect();
            let a = average_precision(&dets, &truths, 0, 0.5, 1).unwrap();
            let b = average_precision(&rescaled, &truths, 0, 0.5, 1).unwrap();
            proptest::prop_assert_eq!(a, b);
            let mut prev = 1.0f64;
            for t in map_thresholds() {
                let v = average_precision(&dets, &truths, 0, t, 1).unwrap();
                proptest::prop_assert!(v <= prev + 1e-12);
                prev = v;
            }
        }
    }
}
