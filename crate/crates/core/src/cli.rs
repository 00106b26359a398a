//! Command-line front end. Every subcommand writes `config.json`, the fully
//! resolved configuration, into its output directory; passing that file
//! back with `--config` repeats the run.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use crate::anchors::AnchorSet;
use crate::backend::{DetectorBackend, FileBackend, OracleBackend, OracleConfig};
use crate::dataset::{load_image, write_tiles, Manifest};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::pipeline::{
    anchors_from_manifest, burn_boxes, detect_plan, eval_inputs, image_stem, DetectSettings, DetectionRecord,
    PipelineConfig,
};
use crate::raster::NoiseLevel;
use crate::synthgen::write_corpus;
use crate::tiler::extract_training_tiles;
use crate::util::{ensure_dir, read_json, write_json};

#[derive(Debug, Parser)]
#[command(name = "symspot", version, about = "Symbol spotting in large raster floor plans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a corpus of synthetic plans with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of plans (defaults to `corpus_size` of the config).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Cut training tiles and write a tile-level manifest.
    PrepareTiles {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Add randomly flipped, rotated and rescaled copies of every tile.
        #[arg(long)]
        augment: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Cluster anchor priors from the annotation sizes of a manifest.
    Anchors {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(short, long)]
        k: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Detect symbols in every image of a manifest.
    Detect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendKind::Oracle)]
        backend: BackendKind,
        /// Directory of `.rawpred` tensors for the file backend.
        #[arg(long)]
        tensors: Option<PathBuf>,
        /// Anchor file; clustered from the manifest when absent.
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// Also write each plan with the detections drawn in.
        #[arg(long)]
        burn: bool,
        /// Write every tile's raw tensor into this directory.
        #[arg(long)]
        dump_tensors: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a detections file against a manifest.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Synthesize, detect with a noiseless oracle and check the round trip.
    Selftest {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Oracle,
    File,
}

/// Options shared by every subcommand; flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub overlap_threshold: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub noise_level: Option<u8>,
}

impl Common {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg: PipelineConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = self.stride {
            cfg.tiling.stride = v;
        }
        if let Some(v) = self.alpha {
            cfg.tiling.alpha = v;
        }
        if let Some(v) = self.overlap_threshold {
            cfg.merge.overlap_threshold = v;
        }
        if let Some(v) = self.noise_level {
            cfg.synth.noise_level = NoiseLevel::try_from(v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` and runs the command, returning the process exit code:
/// 0 on success, 1 on a processing failure, 2 on a usage error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn echo(out: &Path, cfg: &PipelineConfig) -> Result<()> {
    ensure_dir(out)?;
    write_json(&out.join("config.json"), cfg)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { out, count, width, height, common } => {
            let mut cfg = common.resolve()?;
            if let Some(c) = count {
                cfg.corpus_size = c;
            }
            if let Some(w) = width {
                cfg.synth.width = w;
            }
            if let Some(h) = height {
                cfg.synth.height = h;
            }
            cfg.synth.seed = cfg.seed;
            cfg.paths.output = Some(out.clone());
            cfg.validate()?;
            echo(&out, &cfg)?;
            let m = cfg.with_pool(|| write_corpus(&out, cfg.corpus_size, &cfg.synth))??;
            println!("wrote {} plans with {} symbols to {}", m.images.len(), m.annotations.len(), out.display());
            Ok(())
        }
        Command::PrepareTiles { manifest, out, augment, common } => {
            let mut cfg = common.resolve()?;
            if augment && !cfg.augment.is_enabled() {
                cfg.augment = crate::tiler::AugmentConfig::standard();
            }
            cfg.paths.manifest = Some(manifest.clone());
            cfg.paths.output = Some(out.clone());
            echo(&out, &cfg)?;
            let source = Manifest::load(&manifest)?;
            let mut tiles_manifest = Manifest::new(source.classes.clone());
            for (name, anns) in source.grouped() {
                let plan = load_image(&manifest, &name)?;
                let tiles = cfg.with_pool(|| extract_training_tiles(&plan, &anns, &cfg.tiling, &cfg.augment, cfg.seed))??;
                write_tiles(&out, &image_stem(&name), &tiles, &mut tiles_manifest)?;
            }
            tiles_manifest.save(out.join("manifest.json"))?;
            println!("wrote {} tiles to {}", tiles_manifest.images.len(), out.display());
            Ok(())
        }
        Command::Anchors { manifest, out, k, common } => {
            let mut cfg = common.resolve()?;
            if let Some(k) = k {
                cfg.head.num_anchors = k;
            }
            cfg.paths.manifest = Some(manifest.clone());
            cfg.paths.output = Some(out.clone());
            let m = Manifest::load(&manifest)?;
            let anchors = anchors_from_manifest(&m, &cfg.tiling, cfg.head.num_anchors, cfg.seed)?;
            echo(&out, &cfg)?;
            anchors.save(out.join("anchors.json"))?;
            for (w, h) in anchors.iter() {
                println!("{w} x {h}");
            }
            Ok(())
        }
        Command::Detect { manifest, out, backend, tensors, anchors, burn, dump_tensors, common } => {
            let mut cfg = common.resolve()?;
            if let Some(a) = anchors {
                cfg.head.anchors = Some(AnchorSet::load(a)?);
            }
            cfg.paths.manifest = Some(manifest.clone());
            cfg.paths.output = Some(out.clone());
            let backend: Box<dyn DetectorBackend> = match backend {
                BackendKind::Oracle => {
                    let o = cfg.oracle.get_or_insert_with(OracleConfig::default);
                    Box::new(OracleBackend::new(*o)?)
                }
                BackendKind::File => {
                    let dir = tensors
                        .or_else(|| cfg.paths.tensors.clone())
                        .ok_or_else(|| Error::invalid("the file backend needs --tensors"))?;
                    cfg.paths.tensors = Some(dir.clone());
                    cfg.oracle = None;
                    Box::new(FileBackend::new(dir))
                }
            };
            let m = Manifest::load(&manifest)?;
            let head = cfg.resolve_head(&m)?;
            cfg.head.anchors = Some(head.anchors.clone());
            echo(&out, &cfg)?;
            let settings = DetectSettings {
                tiling: cfg.tiling,
                head,
                merge: cfg.merge,
                score_threshold: cfg.score_threshold,
                dump_tensors,
            };
            let records = cfg.with_pool(|| detect_manifest(&m, &manifest, backend.as_ref(), &settings, burn.then_some(&out)))??;
            write_json(&out.join("detections.json"), &records)?;
            Ok(())
        }
        Command::Eval { manifest, detections, out, common } => {
            let mut cfg = common.resolve()?;
            cfg.paths.manifest = Some(manifest.clone());
            cfg.paths.detections = Some(detections.clone());
            cfg.paths.output = Some(out.clone());
            echo(&out, &cfg)?;
            let m = Manifest::load(&manifest)?;
            let records: Vec<DetectionRecord> = read_json(&detections)?;
            let report = evaluate(&eval_inputs(&m, &manifest, &records)?, &m.classes)?.rounded();
            write_json(&out.join("report.json"), &report)?;
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Selftest { out, count, common } => {
            let mut cfg = common.resolve()?;
            if let Some(c) = count {
                cfg.corpus_size = c;
            }
            cfg.paths.output = Some(out.clone());
            let summary = crate::selftest::run_selftest(&out, &mut cfg)?;
            for c in &summary.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if summary.passed() {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{} of {} self-test checks failed",
                    summary.checks.iter().filter(|c| !c.passed).count(),
                    summary.checks.len()
                )))
            }
        }
    }
}

/// Detects every manifest image; records come out grouped by image in
/// manifest order. Prints one line of counts per image.
pub fn detect_manifest(
    m: &Manifest,
    manifest_path: &Path,
    backend: &dyn DetectorBackend,
    settings: &DetectSettings,
    burn_dir: Option<&PathBuf>,
) -> Result<Vec<DetectionRecord>> {
    let mut records = Vec::new();
    for name in m.image_names() {
        let plan = load_image(manifest_path, &name)?;
        let stem = image_stem(&name);
        let truth = m.annotations_for(&name);
        let out = detect_plan(&plan, &stem, &truth, backend, settings)?;
        println!("{name}: {} tiles, {} raw, {} merged", out.tiles, out.raw.len(), out.merged.len());
        if let Some(dir) = burn_dir {
            burn_boxes(&plan, &out.merged).save(dir.join(format!("{stem}.boxes.pgm")))?;
        }
        records.extend(out.merged.iter().map(|d| DetectionRecord::new(&name, d, &m.classes)));
    }
    Ok(records)
}
