//! Detector backends: anything that turns a tile into a raw prediction
//! tensor.
//!
//! [`OracleBackend`] fabricates tensors from ground truth with controlled
//! noise and is used to verify the pipeline end to end. [`FileBackend`]
//! reads tensors computed elsewhere (any trained network) from `.rawpred`
//! files:
//!
//! ```text
//! "RPRD1\n"
//! "<grid_h> <grid_w> <channels>\n"
//! grid_h·grid_w·channels little-endian f32, row-major
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{tile_to_plan, BBox, TileFrame};
use crate::head::{encode_detections, Detection, HeadConfig, RawPrediction};
use crate::raster::GrayImage;
use crate::tiler::Annotation;
use crate::util::derive_seed;

pub const RAWPRED_MAGIC: &[u8] = b"RPRD1\n";
pub const RAWPRED_EXT: &str = "rawpred";

/// Everything a backend may look at for one tile.
#[derive(Debug, Clone, Copy)]
pub struct TileInput<'a> {
    pub tile_id: &'a str,
    pub frame: TileFrame,
    /// Tile pixels at network resolution.
    pub pixels: &'a GrayImage,
    /// Ground truth in network coordinates, when known.
    pub truth: &'a [Annotation],
}

pub trait DetectorBackend: Send + Sync {
    fn predict(&self, tile: &TileInput<'_>, head: &HeadConfig) -> Result<RawPrediction>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Probability that a true symbol is left out of a tile's output.
    pub drop_prob: f64,
    /// Standard deviation (pixels) of the Gaussian noise on center and size.
    pub jitter_sigma: f64,
    pub score_low: f64,
    pub score_high: f64,
    /// Expected number of spurious detections per tile.
    pub false_positive_rate: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            drop_prob: 0.0,
            jitter_sigma: 0.0,
            score_low: 0.5,
            score_high: 0.99,
            false_positive_rate: 0.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(Error::invalid(format!("drop_prob {} outside [0, 1]", self.drop_prob)));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::invalid(format!("jitter_sigma {} is negative", self.jitter_sigma)));
        }
        if !(0.0 < self.score_low && self.score_low <= self.score_high && self.score_high < 1.0) {
            return Err(Error::invalid(format!(
                "score range [{}, {}] must satisfy 0 < low <= high < 1",
                self.score_low, self.score_high
            )));
        }
        if !(self.false_positive_rate >= 0.0 && self.false_positive_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "false_positive_rate {} is negative",
                self.false_positive_rate
            )));
        }
        Ok(())
    }
}

/// Predicts the truth of a tile, perturbed per [`OracleConfig`].
///
/// Whether a symbol is dropped is drawn from a generator keyed by the
/// symbol's class and plan-space box (through `frame`), so a dropped symbol
/// is missing from every tile that shows it. Jitter, scores and false
/// positives come from the tile's own generator. Every truth symbol consumes
/// the same draws whatever the configuration, so a higher `drop_prob` drops
/// a superset of the symbols dropped at a lower one (same seed).
pub fn oracle_predict(
    tile_truth: &[Annotation],
    frame: &TileFrame,
    head: &HeadConfig,
    ocfg: &OracleConfig,
    tile_id: &str,
) -> Result<RawPrediction> {
    ocfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ocfg.seed, tile_id));
    let n = head.net_size;
    let max_center = n - n * 1e-9;
    let score_of = |u: f64| ocfg.score_low + (ocfg.score_high - ocfg.score_low) * u;
    let mut dets = Vec::new();

    for a in tile_truth.iter().filter(|a| !a.ignore) {
        let u_drop = symbol_draw(ocfg.seed, a, frame);
        let noise: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let u_score: f64 = rng.random();
        if u_drop < ocfg.drop_prob || a.class_id >= head.num_classes || !a.bbox.is_valid() {
            continue;
        }
        let s = ocfg.jitter_sigma;
        let (cx, cy) = a.bbox.center();
        let (cx, cy) = if s > 0.0 { (cx + s * noise[0], cy + s * noise[1]) } else { (cx, cy) };
        let (w, h) = if s > 0.0 {
            ((a.bbox.w + s * noise[2]).max(1.0), (a.bbox.h + s * noise[3]).max(1.0))
        } else {
            (a.bbox.w, a.bbox.h)
        };
        dets.push(Detection {
            class_id: a.class_id,
            bbox: BBox::from_center(cx.clamp(0.0, max_center), cy.clamp(0.0, max_center), w, h),
            score: score_of(u_score),
        });
    }

    if ocfg.false_positive_rate > 0.0 {
        let count = Poisson::new(ocfg.false_positive_rate)
            .map(|p| p.sample(&mut rng) as usize)
            .unwrap_or(0);
        for _ in 0..count {
            let class_id = rng.random_range(0..head.num_classes);
            let w = rng.random_range(8.0..(n / 3.0).max(9.0));
            let h = rng.random_range(8.0..(n / 3.0).max(9.0));
            let cx = rng.random_range(0.0..max_center);
            let cy = rng.random_range(0.0..max_center);
            let score = score_of(rng.random());
            dets.push(Detection {
                class_id,
                bbox: BBox::from_center(cx, cy, w, h),
                score,
            });
        }
    }

    // one detection per slot: the highest score wins, earlier on ties
    let mut slots: BTreeMap<crate::head::Slot, Detection> = BTreeMap::new();
    for d in dets {
        let slot = head.slot_for(&d.bbox);
        match slots.get(&slot) {
            Some(prev) if prev.score >= d.score => {}
            _ => {
                slots.insert(slot, d);
            }
        }
    }
    let kept: Vec<Detection> = slots.into_values().collect();
    encode_detections(&kept, head)
}

/// Uniform draw tied to a symbol's identity in plan coordinates. The box is
/// rounded to 1e-3 px so every tile reproduces the same key.
fn symbol_draw(seed: u64, a: &Annotation, frame: &TileFrame) -> f64 {
    let b = tile_to_plan(&a.bbox, frame);
    let key = format!("{}:{:.3}:{:.3}:{:.3}:{:.3}", a.class_id, b.x, b.y, b.w, b.h);
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &key)).random()
}

/// Ground-truth backed detector for verification runs.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    pub config: OracleConfig,
}

impl OracleBackend {
    pub fn new(config: OracleConfig) -> Result<Self> {
        config.validate()?;
        Ok(OracleBackend { config })
    }
}

impl DetectorBackend for OracleBackend {
    fn predict(&self, tile: &TileInput<'_>, head: &HeadConfig) -> Result<RawPrediction> {
        oracle_predict(tile.truth, &tile.frame, head, &self.config, tile.tile_id)
    }
}

/// Reads `<directory>/<tile_id>.rawpred` for each tile.
#[derive(Debug, Clone)]
pub struct FileBackend {
    pub directory: PathBuf,
}

impl FileBackend {
    pub fn new(directory: impl Into<PathBuf>) -> Self {
        FileBackend {
            directory: directory.into(),
        }
    }
}

impl DetectorBackend for FileBackend {
    fn predict(&self, tile: &TileInput<'_>, head: &HeadConfig) -> Result<RawPrediction> {
        file_backend_read(tile.tile_id, &self.directory, head)
    }
}

pub fn rawpred_path(directory: &Path, tile_id: &str) -> PathBuf {
    directory.join(format!("{tile_id}.{RAWPRED_EXT}"))
}

/// Serializes a tensor in the `.rawpred` format (values narrowed to f32).
pub fn encode_rawpred(raw: &RawPrediction) -> Vec<u8> {
    let mut out = RAWPRED_MAGIC.to_vec();
    out.extend_from_slice(format!("{} {} {}\n", raw.grid_h, raw.grid_w, raw.channels).as_bytes());
    out.reserve(raw.values.len() * 4);
    for v in &raw.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_rawpred(bytes: &[u8]) -> Result<RawPrediction> {
    let rest = bytes
        .strip_prefix(RAWPRED_MAGIC)
        .ok_or_else(|| Error::Format("missing RPRD1 magic".into()))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("unterminated header line".into()))?;
    let header = std::str::from_utf8(&rest[..nl]).map_err(|_| Error::Format("header is not ASCII".into()))?;
    let dims: Vec<usize> = header
        .split(' ')
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("bad header line {header:?}")))?;
    let [gh, gw, ch] = dims[..] else {
        return Err(Error::Format(format!("header needs 3 dimensions, found {header:?}")));
    };
    let payload = &rest[nl + 1..];
    let count = gh * gw * ch;
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header {gh}x{gw}x{ch} needs {}",
            payload.len(),
            count * 4
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!("non-finite value at index {i}")));
    }
    RawPrediction::from_values(gh, gw, ch, values)
}

pub fn write_rawpred(path: &Path, raw: &RawPrediction) -> Result<()> {
    std::fs::write(path, encode_rawpred(raw)).map_err(|e| Error::io(path, e))
}

/// Loads a tile's tensor and checks it against the head shape.
pub fn file_backend_read(tile_id: &str, directory: &Path, cfg: &HeadConfig) -> Result<RawPrediction> {
    let path = rawpred_path(directory, tile_id);
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotFound(format!("tensor for tile {tile_id} ({})", path.display())))
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let raw = decode_rawpred(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if (raw.grid_h, raw.grid_w, raw.channels) != (cfg.grid_h, cfg.grid_w, cfg.channels()) {
        return Err(Error::Format(format!(
            "{}: expected {}x{}x{} but found {}x{}x{}",
            path.display(),
            cfg.grid_h,
            cfg.grid_w,
            cfg.channels(),
            raw.grid_h,
            raw.grid_w,
            raw.channels
        )));
    }
    Ok(raw)
}
