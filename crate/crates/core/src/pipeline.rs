//! Tiled detection over whole plans and the shared run configuration.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::{cluster_anchors, AnchorSet};
use crate::backend::{write_rawpred, rawpred_path, DetectorBackend, OracleConfig, TileInput};
use crate::dataset::Manifest;
use crate::error::{Error, Result};
use crate::geometry::{tile_to_plan, BBox};
use crate::head::{decode, Detection, HeadConfig};
use crate::merger::{merge_detections, sort_detections, MergeConfig};
use crate::metrics::ImageEval;
use crate::raster::{GrayImage, Primitive};
use crate::synthgen::PlanSpec;
use crate::tiler::{enumerate_tiles, tile_annotations, tile_id, tile_pixels, Annotation, AugmentConfig, TilingConfig};
use crate::util::sig6;

/// Head layout as configured; anchors are clustered from the training
/// manifest when not given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadSettings {
    pub grid_h: usize,
    pub grid_w: usize,
    /// Number of priors to cluster when `anchors` is absent.
    pub num_anchors: usize,
    pub anchors: Option<AnchorSet>,
}

impl Default for HeadSettings {
    fn default() -> Self {
        HeadSettings {
            grid_h: 7,
            grid_w: 7,
            num_anchors: 10,
            anchors: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub tensors: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

/// Everything a run depends on. Written back next to the outputs of every
/// command so the run can be repeated from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads for tile processing; 0 uses every core.
    pub jobs: usize,
    pub tiling: TilingConfig,
    pub head: HeadSettings,
    pub merge: MergeConfig,
    pub oracle: Option<OracleConfig>,
    pub score_threshold: f64,
    pub augment: AugmentConfig,
    pub synth: PlanSpec,
    pub corpus_size: usize,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            jobs: 0,
            tiling: TilingConfig::default(),
            head: HeadSettings::default(),
            merge: MergeConfig::default(),
            oracle: None,
            score_threshold: 0.25,
            augment: AugmentConfig::default(),
            synth: PlanSpec::default(),
            corpus_size: 4,
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.tiling.validate()?;
        self.merge.validate()?;
        if let Some(o) = &self.oracle {
            o.validate()?;
        }
        if !(self.score_threshold > 0.0 && self.score_threshold < 1.0) {
            return Err(Error::invalid(format!(
                "score_threshold {} outside (0, 1)",
                self.score_threshold
            )));
        }
        if self.head.grid_h == 0 || self.head.grid_w == 0 {
            return Err(Error::invalid("grid dimensions must be at least 1"));
        }
        if self.head.anchors.is_none() && self.head.num_anchors == 0 {
            return Err(Error::invalid("num_anchors must be at least 1"));
        }
        self.synth.validate()
    }

    /// Head configuration for a dataset, clustering anchors from its
    /// annotation sizes if none are configured.
    pub fn resolve_head(&self, manifest: &Manifest) -> Result<HeadConfig> {
        let anchors = match &self.head.anchors {
            Some(a) => a.clone(),
            None => anchors_from_manifest(manifest, &self.tiling, self.head.num_anchors, self.seed)?,
        };
        HeadConfig::new(
            self.head.grid_h,
            self.head.grid_w,
            manifest.classes.len(),
            anchors,
            self.tiling.net_size as f64,
        )
    }

    /// Runs `f` on a pool bounded by `jobs`.
    pub fn with_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Clusters priors from the (network-scaled) sizes of the non-ignored
/// annotations in a manifest.
pub fn anchors_from_manifest(manifest: &Manifest, tiling: &TilingConfig, k: usize, seed: u64) -> Result<AnchorSet> {
    let scale = tiling.net_size as f64 / tiling.side() as f64;
    let sizes: Vec<(f64, f64)> = manifest
        .annotations
        .iter()
        .filter(|a| !a.ignore)
        .map(|a| (a.w * scale, a.h * scale))
        .collect();
    if sizes.is_empty() {
        return Err(Error::invalid("manifest has no annotations to cluster"));
    }
    let anchors = cluster_anchors(&sizes, k.min(sizes.len()), seed, 100)?;
    AnchorSet::new(anchors.iter().map(|(w, h)| [sig6(w), sig6(h)]).collect())
}

/// Settings for detecting symbols in one plan.
#[derive(Debug, Clone)]
pub struct DetectSettings {
    pub tiling: TilingConfig,
    pub head: HeadConfig,
    pub merge: MergeConfig,
    pub score_threshold: f64,
    /// When set, every tile's raw tensor is also written here.
    pub dump_tensors: Option<PathBuf>,
}

/// Detections of one plan before and after duplicate removal, in plan
/// pixels, both sorted by [`crate::merger::detection_order`].
#[derive(Debug, Clone)]
pub struct PlanDetections {
    pub tiles: usize,
    pub raw: Vec<Detection>,
    pub merged: Vec<Detection>,
}

/// Runs the backend over every tile of a plan and merges the results.
///
/// `truth` is handed to the backend per tile (only oracles look at it).
/// Tiles run in parallel on the current rayon pool; the outcome does not
/// depend on completion order.
pub fn detect_plan(
    plan: &GrayImage,
    image_stem: &str,
    truth: &[Annotation],
    backend: &dyn DetectorBackend,
    settings: &DetectSettings,
) -> Result<PlanDetections> {
    settings.tiling.validate()?;
    settings.merge.validate()?;
    let frames = enumerate_tiles(plan.width(), plan.height(), &settings.tiling);
    if let Some(dir) = &settings.dump_tensors {
        crate::util::ensure_dir(dir)?;
    }
    let per_tile: Vec<Vec<Detection>> = frames
        .par_iter()
        .map(|frame| -> Result<Vec<Detection>> {
            let id = tile_id(image_stem, frame);
            let pixels = tile_pixels(plan, frame, &settings.tiling);
            let tile_truth = tile_annotations(truth, frame);
            let input = TileInput {
                tile_id: &id,
                frame: *frame,
                pixels: &pixels,
                truth: &tile_truth,
            };
            let raw = backend.predict(&input, &settings.head)?;
            if let Some(dir) = &settings.dump_tensors {
                write_rawpred(&rawpred_path(dir, &id), &raw)?;
            }
            let dets = decode(&raw, &settings.head, settings.score_threshold)?;
            Ok(dets
                .into_iter()
                .map(|d| Detection {
                    bbox: tile_to_plan(&d.bbox, frame),
                    ..d
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut raw: Vec<Detection> = per_tile.into_iter().flatten().collect();
    sort_detections(&mut raw);
    let merged = merge_detections(&raw, &settings.merge);
    Ok(PlanDetections {
        tiles: frames.len(),
        raw,
        merged,
    })
}

/// One line of a detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image: String,
    pub class_id: usize,
    pub class_name: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl DetectionRecord {
    /// Record with coordinates and score rounded to six significant digits.
    pub fn new(image: &str, det: &Detection, classes: &[String]) -> Self {
        DetectionRecord {
            image: image.to_string(),
            class_id: det.class_id,
            class_name: classes.get(det.class_id).cloned().unwrap_or_else(|| det.class_id.to_string()),
            x: sig6(det.bbox.x),
            y: sig6(det.bbox.y),
            w: sig6(det.bbox.w),
            h: sig6(det.bbox.h),
            score: sig6(det.score),
        }
    }

    pub fn detection(&self) -> Detection {
        Detection {
            class_id: self.class_id,
            bbox: BBox::new(self.x, self.y, self.w, self.h),
            score: self.score,
        }
    }
}

/// Pairs detection records with a manifest's images for evaluation.
/// Every manifest image is evaluated, with or without detections.
pub fn eval_inputs(manifest: &Manifest, manifest_path: &Path, records: &[DetectionRecord]) -> Result<Vec<ImageEval>> {
    let names = manifest.image_names();
    if let Some(r) = records.iter().find(|r| !names.contains(&r.image)) {
        return Err(Error::NotFound(format!("image {} of the detections is not in the manifest", r.image)));
    }
    names
        .iter()
        .map(|name| {
            let (width, height) = match manifest.image_record(name) {
                Some(rec) => (rec.width, rec.height),
                None => {
                    let img = crate::dataset::load_image(manifest_path, name)?;
                    (img.width(), img.height())
                }
            };
            Ok(ImageEval {
                detections: records.iter().filter(|r| &r.image == name).map(DetectionRecord::detection).collect(),
                truths: manifest.annotations_for(name),
                width,
                height,
            })
        })
        .collect()
}

/// Copy of a plan with detection outlines drawn in.
pub fn burn_boxes(plan: &GrayImage, dets: &[Detection]) -> GrayImage {
    let mut out = plan.clone();
    for d in dets {
        out.draw_mut(&Primitive::RectOutline {
            x: d.bbox.x.round(),
            y: d.bbox.y.round(),
            w: d.bbox.w.round(),
            h: d.bbox.h.round(),
            width: 2.0,
        });
    }
    out
}

/// File stem of a manifest image entry, used to name its tiles.
pub fn image_stem(image: &str) -> String {
    Path::new(image)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FileBackend, OracleBackend};
    use crate::synthgen::generate_plan;

    fn setup(seed: u64) -> (crate::synthgen::Plan, Manifest, DetectSettings) {
        let plan = generate_plan(&PlanSpec { width: 600, height: 560, seed, ..Default::default() }).unwrap();
        let mut m = Manifest::new(crate::synthgen::SymbolKind::class_names());
        m.push_image("p.pgm", 600, 560, &plan.annotations);
        let cfg = PipelineConfig::default();
        let head = cfg.resolve_head(&m).unwrap();
        let settings = DetectSettings {
            tiling: cfg.tiling,
            head,
            merge: cfg.merge,
            score_threshold: cfg.score_threshold,
            dump_tensors: None,
        };
        (plan, m, settings)
    }

    #[test]
    fn noiseless_oracle_recovers_truth() {
        let (plan, _, settings) = setup(11);
        let backend = OracleBackend::new(OracleConfig::default()).unwrap();
        let out = detect_plan(&plan.image, "p", &plan.annotations, &backend, &settings).unwrap();
        assert!(out.raw.len() > plan.annotations.len());
        assert_eq!(out.merged.len(), plan.annotations.len());
        for a in &plan.annotations {
            assert!(out.merged.iter().any(|d| d.class_id == a.class_id
                && (d.bbox.x - a.bbox.x).abs() < 1e-6
                && (d.bbox.w - a.bbox.w).abs() < 1e-6
                && (d.bbox.y - a.bbox.y).abs() < 1e-6
                && (d.bbox.h - a.bbox.h).abs() < 1e-6));
        }
    }

    #[test]
    fn dumped_tensors_feed_the_file_backend() {
        let (plan, _, mut settings) = setup(12);
        let dir = tempfile::tempdir().unwrap();
        settings.dump_tensors = Some(dir.path().to_path_buf());
        let oracle = OracleBackend::new(OracleConfig::default()).unwrap();
        let a = detect_plan(&plan.image, "p", &plan.annotations, &oracle, &settings).unwrap();
        settings.dump_tensors = None;
        let b = detect_plan(&plan.image, "p", &[], &FileBackend::new(dir.path()), &settings).unwrap();
        assert_eq!(a.merged.len(), b.merged.len());
        for (x, y) in a.merged.iter().zip(&b.merged) {
            assert_eq!(x.class_id, y.class_id);
            assert!((x.bbox.x - y.bbox.x).abs() < 1e-3 && (x.score - y.score).abs() < 1e-5);
        }
    }

    #[test]
    fn file_backend_without_tensors_is_not_found() {
        let (plan, _, settings) = setup(13);
        let dir = tempfile::tempdir().unwrap();
        let err = detect_plan(&plan.image, "p", &[], &FileBackend::new(dir.path()), &settings).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }

    #[test]
    fn config_round_trips_and_validates() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: PipelineConfig = serde_json::from_str(r#"{"tiling": {"stride": 30}}"#).unwrap();
        assert_eq!(partial.tiling.stride, 30);
        assert_eq!(partial.tiling.net_size, 227);
        assert!(PipelineConfig { score_threshold: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn records_round() {
        let d = Detection { class_id: 1, bbox: BBox::new(10.000000001, 2.0, 3.0, 4.0), score: 0.123456789 };
        let r = DetectionRecord::new("a.pgm", &d, &["x".into(), "y".into()]);
        assert_eq!((r.x, r.score, r.class_name.as_str()), (10.0, 0.123457, "y"));
    }
}
