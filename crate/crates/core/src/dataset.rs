//! Dataset manifest: class names plus per-image annotation records.
//!
//! ```json
//! {
//!   "classes": ["door", "bathtub"],
//!   "images": [{"path": "plan_000.pgm", "width": 800, "height": 800}],
//!   "annotations": [{"image": "plan_000.pgm", "class_id": 0, "x": 10, "y": 12, "w": 40, "h": 40}]
//! }
//! ```
//!
//! Coordinates are pixels with a top-left origin. `images` and the
//! per-record `ignore` flag are optional.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::raster::GrayImage;
use crate::tiler::{tile_id, Annotation, TrainingTile};
use crate::util::{ensure_dir, read_json, sig6, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image: String,
    pub class_id: usize,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ignore: bool,
}

impl AnnotationRecord {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.x, self.y, self.w, self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageRecord>,
    #[serde(default)]
    pub annotations: Vec<AnnotationRecord>,
}

impl Manifest {
    pub fn new(classes: Vec<String>) -> Self {
        Manifest {
            classes,
            ..Default::default()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let m: Manifest = read_json(path.as_ref())?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("manifest lists no classes"));
        }
        for (i, a) in self.annotations.iter().enumerate() {
            if a.class_id >= self.classes.len() {
                return Err(Error::invalid(format!(
                    "annotation #{i} on {} has class_id {} but only {} classes exist",
                    a.image,
                    a.class_id,
                    self.classes.len()
                )));
            }
            if !a.bbox().is_valid() {
                return Err(Error::invalid(format!("annotation #{i} on {} has a degenerate box", a.image)));
            }
        }
        Ok(())
    }

    /// Image names in manifest order: the `images` list first, then any
    /// image that only appears in annotation records.
    pub fn image_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.images.iter().map(|r| r.path.clone()).collect();
        for a in &self.annotations {
            if !names.contains(&a.image) {
                names.push(a.image.clone());
            }
        }
        names
    }

    pub fn image_record(&self, image: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|r| r.path == image)
    }

    pub fn annotations_for(&self, image: &str) -> Vec<Annotation> {
        self.annotations
            .iter()
            .filter(|a| a.image == image)
            .map(|a| Annotation {
                class_id: a.class_id,
                class_name: self.classes.get(a.class_id).cloned().unwrap_or_default(),
                bbox: a.bbox(),
                ignore: a.ignore,
            })
            .collect()
    }

    /// Annotations grouped per image.
    pub fn grouped(&self) -> BTreeMap<String, Vec<Annotation>> {
        self.image_names()
            .into_iter()
            .map(|n| {
                let anns = self.annotations_for(&n);
                (n, anns)
            })
            .collect()
    }

    pub fn push_image(&mut self, path: impl Into<String>, width: usize, height: usize, anns: &[Annotation]) {
        let path = path.into();
        for a in anns {
            self.annotations.push(AnnotationRecord {
                image: path.clone(),
                class_id: a.class_id,
                x: sig6(a.bbox.x),
                y: sig6(a.bbox.y),
                w: sig6(a.bbox.w),
                h: sig6(a.bbox.h),
                ignore: a.ignore,
            });
        }
        self.images.push(ImageRecord { path, width, height });
    }

    /// Resolves an image entry relative to the manifest's directory.
    pub fn resolve(manifest_path: &Path, image: &str) -> PathBuf {
        let p = Path::new(image);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

/// Writes training tiles as PGM files into `out_dir` and records them in
/// `manifest` (tile coordinates). Augmented copies get an `_aug<k>` suffix.
pub fn write_tiles(
    out_dir: &Path,
    image_stem: &str,
    tiles: &[TrainingTile],
    manifest: &mut Manifest,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let mut aug_counter: BTreeMap<String, usize> = BTreeMap::new();
    for t in tiles {
        let base = tile_id(image_stem, &t.frame);
        let name = match t.augmentation {
            None => format!("{base}.pgm"),
            Some(_) => {
                let k = aug_counter.entry(base.clone()).or_insert(0);
                *k += 1;
                format!("{base}_aug{k}.pgm")
            }
        };
        t.image.save(out_dir.join(&name))?;
        manifest.push_image(name, t.image.width(), t.image.height(), &t.annotations);
    }
    Ok(())
}

/// Loads an image listed in a manifest.
pub fn load_image(manifest_path: &Path, image: &str) -> Result<GrayImage> {
    GrayImage::load(Manifest::resolve(manifest_path, image))
}
