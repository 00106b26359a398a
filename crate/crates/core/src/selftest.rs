//! End-to-end self check: synthesize a corpus, detect it with a noiseless
//! oracle and verify every stage of the round trip. All artifacts are
//! written under one directory and are byte-identical for a given config.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backend::{FileBackend, OracleBackend, OracleConfig};
use crate::dataset::load_image;
use crate::error::Result;
use crate::geometry::BBox;
use crate::head::{decode, encode_detections, Detection, HeadConfig};
use crate::metrics::evaluate;
use crate::pipeline::{detect_plan, eval_inputs, image_stem, DetectSettings, DetectionRecord, PipelineConfig};
use crate::synthgen::write_corpus;
use crate::util::{derive_seed, write_json};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestSummary {
    pub seed: u64,
    pub plans: usize,
    pub symbols: usize,
    pub checks: Vec<Check>,
}

impl SelftestSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn box_key(class_id: usize, b: &BBox) -> (usize, [u64; 4]) {
    (class_id, [b.x.to_bits(), b.y.to_bits(), b.w.to_bits(), b.h.to_bits()])
}

/// Runs the self test into `out`. The oracle is forced to be noiseless;
/// `cfg` is updated to what was actually run and echoed as `config.json`.
pub fn run_selftest(out: &Path, cfg: &mut PipelineConfig) -> Result<SelftestSummary> {
    cfg.synth.seed = cfg.seed;
    cfg.oracle = Some(OracleConfig {
        seed: cfg.seed,
        ..OracleConfig::default()
    });
    cfg.validate()?;

    let corpus = out.join("corpus");
    let manifest_path = corpus.join("manifest.json");
    let m = cfg.with_pool(|| write_corpus(&corpus, cfg.corpus_size, &cfg.synth))??;
    let head = cfg.resolve_head(&m)?;
    cfg.head.anchors = Some(head.anchors.clone());
    cfg.paths.manifest = Some(manifest_path.clone());
    cfg.paths.tensors = Some(out.join("tensors"));
    cfg.paths.detections = Some(out.join("detections.json"));
    write_json(&out.join("config.json"), cfg)?;
    head.anchors.save(out.join("anchors.json"))?;

    let mut settings = DetectSettings {
        tiling: cfg.tiling,
        head: head.clone(),
        merge: cfg.merge,
        score_threshold: cfg.score_threshold,
        dump_tensors: Some(out.join("tensors")),
    };
    let oracle = OracleBackend::new(cfg.oracle.unwrap_or_default())?;
    let files = FileBackend::new(out.join("tensors"));

    let mut checks = Vec::new();
    let mut records = Vec::new();
    let mut bridged = Vec::new();
    let mut exact = true;
    let mut collapsed = true;
    for name in m.image_names() {
        let plan = load_image(&manifest_path, &name)?;
        let stem = image_stem(&name);
        let truth = m.annotations_for(&name);
        settings.dump_tensors = Some(out.join("tensors"));
        let dets = cfg.with_pool(|| detect_plan(&plan, &stem, &truth, &oracle, &settings))??;
        settings.dump_tensors = None;
        let from_files = cfg.with_pool(|| detect_plan(&plan, &stem, &[], &files, &settings))??;

        let recs: Vec<DetectionRecord> = dets.merged.iter().map(|d| DetectionRecord::new(&name, d, &m.classes)).collect();
        let mut got: Vec<_> = recs.iter().map(|r| box_key(r.class_id, &r.detection().bbox)).collect();
        let mut want: Vec<_> = truth.iter().map(|a| box_key(a.class_id, &a.bbox)).collect();
        got.sort();
        want.sort();
        exact &= got == want;
        collapsed &= dets.raw.len() > truth.len() && dets.merged.len() == truth.len();
        bridged.extend(from_files.merged.iter().map(|d| DetectionRecord::new(&name, d, &m.classes)));
        records.extend(recs);
    }
    write_json(&out.join("detections.json"), &records)?;

    checks.push(Check::new(
        "oracle-round-trip",
        exact,
        "merged detections equal the manifest boxes",
    ));
    checks.push(Check::new(
        "duplicate-collapse",
        collapsed,
        "more raw detections than symbols, exactly one per symbol after merging",
    ));
    let same_boxes = bridged.len() == records.len()
        && bridged.iter().zip(&records).all(|(a, b)| {
            a.image == b.image && a.class_id == b.class_id && (a.x, a.y, a.w, a.h) == (b.x, b.y, b.w, b.h)
        });
    checks.push(Check::new(
        "tensor-file-bridge",
        same_boxes,
        "tensors written to disk decode to the same detections",
    ));

    let report = evaluate(&eval_inputs(&m, &manifest_path, &records)?, &m.classes)?.rounded();
    write_json(&out.join("report.json"), &report)?;
    let a = &report.aggregate;
    let perfect = [a.ap50, a.ap75, a.map, report.instance.f_score, report.pixel.f_score]
        .iter()
        .all(|v| *v == 1.0);
    checks.push(Check::new(
        "perfect-scores",
        perfect,
        format!(
            "AP50 {} AP75 {} mAP {} instance F {} pixel F {}",
            a.ap50, a.ap75, a.map, report.instance.f_score, report.pixel.f_score
        ),
    ));

    let err = encode_decode_error(&head, 200, derive_seed(cfg.seed, "encode-decode"))?;
    checks.push(Check::new(
        "encode-decode",
        err < 1e-6,
        format!("max error {:.1e} over 200 random detection sets", err),
    ));

    let summary = SelftestSummary {
        seed: cfg.seed,
        plans: m.images.len(),
        symbols: m.annotations.len(),
        checks,
    };
    write_json(&out.join("selftest.json"), &summary)?;
    Ok(summary)
}

/// One random detection per free slot with probability 0.3.
pub fn random_detections<R: Rng>(head: &HeadConfig, rng: &mut R) -> Vec<Detection> {
    let mut taken = std::collections::BTreeSet::new();
    let mut dets = Vec::new();
    for row in 0..head.grid_h {
        for col in 0..head.grid_w {
            for a in 0..head.num_anchors() {
                if !rng.random_bool(0.3) {
                    continue;
                }
                let (pw, ph) = head.anchors.get(a);
                let cx = (col as f64 + rng.random_range(0.01..0.99)) * head.cell_w();
                let cy = (row as f64 + rng.random_range(0.01..0.99)) * head.cell_h();
                let w = pw * rng.random_range(-0.7f64..0.7).exp();
                let h = ph * rng.random_range(-0.7f64..0.7).exp();
                let d = Detection {
                    class_id: rng.random_range(0..head.num_classes),
                    bbox: BBox::from_center(cx, cy, w, h),
                    score: rng.random_range(0.05..0.999),
                };
                if taken.insert(head.slot_for(&d.bbox)) {
                    dets.push(d);
                }
            }
        }
    }
    dets
}

/// Largest coordinate or score difference after encoding and decoding
/// `sets` random detection sets.
pub fn encode_decode_error(head: &HeadConfig, sets: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..sets {
        let mut dets = random_detections(head, &mut rng);
        let mut back = decode(&encode_detections(&dets, head)?, head, 0.01)?;
        if back.len() != dets.len() {
            return Ok(f64::INFINITY);
        }
        dets.sort_by_key(|d| head.slot_for(&d.bbox));
        back.sort_by_key(|d| head.slot_for(&d.bbox));
        for (a, b) in dets.iter().zip(&back) {
            if a.class_id != b.class_id {
                return Ok(f64::INFINITY);
            }
            for (u, v) in [(a.bbox.x, b.bbox.x), (a.bbox.y, b.bbox.y), (a.bbox.w, b.bbox.w), (a.bbox.h, b.bbox.h), (a.score, b.score)] {
                worst = worst.max((u - v).abs());
            }
        }
    }
    Ok(worst)
}
