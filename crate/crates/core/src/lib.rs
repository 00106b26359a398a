//! Symbol spotting in large raster floor plans with any grid-based
//! detector.
//!
//! A plan is cut into overlapping square tiles ([`tiler`]), each tile goes
//! through a [`backend::DetectorBackend`] that returns a raw YOLO-style
//! prediction tensor, the tensor is decoded into boxes ([`head`]), boxes are
//! mapped back to plan coordinates and cross-tile duplicates are removed
//! ([`merger`]). [`metrics`] scores the result with AP/mAP and with
//! instance- and pixel-wise precision/recall. [`synthgen`] draws seeded
//! synthetic plans with exact ground truth, which together with the
//! ground-truth [`backend::OracleBackend`] lets the whole chain be checked
//! without a trained network.

pub mod anchors;
pub mod backend;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod head;
pub mod merger;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod selftest;
pub mod synthgen;
pub mod tiler;
pub mod util;

pub use error::{Error, Result};
pub use geometry::{iou, overlap_fraction_of_smaller, BBox, TileFrame};
pub use head::{decode, encode_detections, Detection, HeadConfig, RawPrediction};
pub use merger::{merge_detections, MergeConfig};
pub use raster::GrayImage;
pub use tiler::{Annotation, TilingConfig};
