//! `sarstack` command-line entry point.
//!
//! Exit codes: 0 on success, 1 when the operating system fails us (missing
//! files, unwritable outputs), 2 for invalid flags or inputs.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sarstack::composites::{
    crop_detection_patches, crop_grid, load_png, load_raster, s1_composite, s2_composite, save_png,
    sidecar_path, BandRaster, ClipPercentiles, CropSpec, ManifestEntry, RgbImage,
    DEFAULT_CLIP_PERCENTILES, DEFAULT_REFLECTANCE_SCALE,
};
use sarstack::datasets::{
    load_gt, load_predictions, natural_cmp, split, sweep, write_gt, write_predictions, DatasetGT,
    ImageInfo, PredictionSet, SplitSpec,
};
use sarstack::metrics::evaluate;
use sarstack::tuner::{tune, SearchSpace};
use sarstack::wbf::{fuse_dataset, EnsembleConfig};
use sarstack::{Annotation, Error, Result};

#[derive(Parser)]
#[command(
    name = "sarstack",
    version,
    about = "SAR composites, detection evaluation and box-fusion ensembles"
)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress warnings and progress messages.
    #[arg(long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    /// Print progress messages to stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an RGB composite PNG from raw bands.
    #[command(subcommand)]
    Composite(CompositeCommand),
    /// Cut an image into square patches.
    Crop(CropArgs),
    /// Split a COCO ground-truth file into train and validation parts.
    Split(SplitArgs),
    /// Score a prediction file against ground truth.
    Eval(EvalArgs),
    /// Fuse several prediction files with Weighted Boxes Fusion.
    Fuse(FuseArgs),
    /// Search fusion weights and thresholds.
    Tune(TuneArgs),
    /// Evaluate every checkpoint in a directory and pick the best.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum CompositeCommand {
    /// Sentinel-1: VH, VV and their ratio.
    S1 {
        #[arg(long)]
        vh: PathBuf,
        #[arg(long)]
        vv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Percentile clip as LO,HI.
        #[arg(long, value_parser = parse_pair::<f64>)]
        clip: Option<(f64, f64)>,
    },
    /// Sentinel-2 true colour from B04, B03 and B02.
    S2 {
        #[arg(long)]
        b04: PathBuf,
        #[arg(long)]
        b03: PathBuf,
        #[arg(long)]
        b02: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reflectance value mapped to byte 255.
        #[arg(long, default_value_t = DEFAULT_REFLECTANCE_SCALE)]
        scale: f64,
    },
}

#[derive(Args)]
struct CropArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    size: usize,
    /// Defaults to the patch size.
    #[arg(long)]
    stride: Option<usize>,
    /// Ground truth holding this image's boxes; keeps only patches with objects.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5, requires = "gt")]
    min_visibility: f64,
    /// Patch origin X,Y to skip. Repeatable.
    #[arg(long, value_parser = parse_pair::<usize>)]
    exclude: Vec<(usize, usize)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 0.85)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_val: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Also write the full report as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pred: Vec<PathBuf>,
    /// One weight per prediction file, comma separated. Defaults to all ones.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    #[arg(long, default_value_t = 0.55)]
    iou_thr: f64,
    #[arg(long, default_value_t = 0.0)]
    skip_thr: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pred: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    gt: PathBuf,
    /// Directory of prediction files; each file stem is a checkpoint label.
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long)]
    out_csv: PathBuf,
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated values, got `{s}`"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<T>()
            .map_err(|_| format!("cannot parse `{v}`"))
    };
    Ok((parse(a)?, parse(b)?))
}

struct Log {
    quiet: bool,
    verbose: bool,
}

impl Log {
    fn info(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn warn(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("warning: {}", msg.as_ref());
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_band(path: &Path) -> Result<BandRaster> {
    load_raster(path, sidecar_path(path))
}

fn cmd_composite(cmd: CompositeCommand, log: &Log) -> Result<()> {
    let (img, out) = match cmd {
        CompositeCommand::S1 { vh, vv, out, clip } => {
            let (lo, hi) =
                clip.unwrap_or((DEFAULT_CLIP_PERCENTILES.low, DEFAULT_CLIP_PERCENTILES.high));
            let clip = ClipPercentiles::new(lo, hi).map_err(|e| e.context("--clip"))?;
            (s1_composite(&read_band(&vh)?, &read_band(&vv)?, clip)?, out)
        }
        CompositeCommand::S2 {
            b04,
            b03,
            b02,
            out,
            scale,
        } => {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::Input(format!(
                    "--scale must be positive, got {scale}"
                )));
            }
            (
                s2_composite(
                    &read_band(&b04)?,
                    &read_band(&b03)?,
                    &read_band(&b02)?,
                    scale,
                )?,
                out,
            )
        }
    };
    save_png(&img, &out)?;
    log.info(format!(
        "wrote {}x{} composite to {}",
        img.width,
        img.height,
        out.display()
    ));
    Ok(())
}

fn patch_name(stem: &str, x: usize, y: usize) -> String {
    format!("{stem}_{x}_{y}.png")
}

/// The ground-truth entry for `input`, matched by file name, or the only image.
fn source_image<'a>(gt: &'a DatasetGT, input: &Path) -> Result<&'a ImageInfo> {
    let name = input
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    if let Some(img) = gt.images.iter().find(|i| i.file_name == name) {
        return Ok(img);
    }
    match gt.images.as_slice() {
        [only] => Ok(only),
        _ => Err(Error::Validation(format!(
            "no image named `{name}` in the ground truth"
        ))),
    }
}

fn cmd_crop(args: CropArgs, log: &Log) -> Result<()> {
    let spec = CropSpec::with_stride(
        args.size,
        args.stride.unwrap_or(args.size),
        args.min_visibility,
    )?;
    let gt = args.gt.as_deref().map(load_gt).transpose()?;
    let img = load_png(&args.input)?;
    let stem = args
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("patch")
        .to_string();
    let source = args.input.display().to_string();
    let excluded: HashSet<(usize, usize)> = args.exclude.iter().copied().collect();

    let patches: Vec<(RgbImage, usize, usize, Vec<Annotation>)> = match &gt {
        Some(gt) => {
            let info = source_image(gt, &args.input)?;
            if (info.width as usize, info.height as usize) != (img.width, img.height) {
                return Err(Error::Validation(format!(
                    "image is {}x{} but the ground truth says {}x{}",
                    img.width, img.height, info.width, info.height
                )));
            }
            let anns: Vec<Annotation> = gt
                .annotations
                .iter()
                .filter(|a| a.image_id == info.id)
                .cloned()
                .collect();
            crop_detection_patches(&img, &anns, &spec)?
                .into_iter()
                .map(|p| (p.image, p.origin_x, p.origin_y, p.annotations))
                .collect()
        }
        None => crop_grid(&img, &spec)?
            .into_iter()
            .map(|p| (p.image, p.origin_x, p.origin_y, vec![]))
            .collect(),
    };

    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let mut manifest = Vec::new();
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let mut seen = HashSet::new();
    for (patch, x, y, anns) in patches {
        seen.insert((x, y));
        if excluded.contains(&(x, y)) {
            continue;
        }
        let file_name = patch_name(&stem, x, y);
        save_png(&patch, args.out.join(&file_name))?;
        let image_id = images.len() as u64 + 1;
        for a in anns {
            annotations.push(Annotation {
                image_id,
                annotation_id: annotations.len() as u64 + 1,
                ..a
            });
        }
        images.push(ImageInfo {
            id: image_id,
            width: patch.width as u32,
            height: patch.height as u32,
            file_name: file_name.clone(),
        });
        manifest.push(ManifestEntry {
            file_name,
            origin_x: x,
            origin_y: y,
            source: source.clone(),
        });
    }
    for origin in excluded.difference(&seen) {
        log.warn(format!(
            "excluded origin {},{} is not a patch origin",
            origin.0, origin.1
        ));
    }

    let manifest_path = args.out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&manifest_path, text)?;
    if let Some(gt) = gt {
        let patch_gt = DatasetGT::new(images, annotations, gt.categories)?;
        write_gt(args.out.join("annotations.json"), &patch_gt)?;
    }
    log.info(format!(
        "wrote {} patches to {}",
        manifest.len(),
        args.out.display()
    ));
    Ok(())
}

fn cmd_split(args: SplitArgs, log: &Log) -> Result<()> {
    let spec = SplitSpec::new(args.train_fraction, args.seed)
        .map_err(|e| e.context("--train-fraction"))?;
    let gt = load_gt(&args.gt)?;
    let (train, val) = split(&gt, &spec)?;
    write_gt(&args.out_train, &train)?;
    write_gt(&args.out_val, &val)?;
    log.info(format!(
        "train {} images, val {} images",
        train.images.len(),
        val.images.len()
    ));
    Ok(())
}

fn cmd_eval(args: EvalArgs, log: &Log) -> Result<()> {
    let gt = load_gt(&args.gt)?;
    let preds = load_predictions(&args.pred, &gt)?;
    let report = evaluate(&gt, &preds)?;
    for w in &report.warnings {
        log.warn(w);
    }
    println!("AP@[0.50:0.95] {:.2}", report.ap_50_95);
    println!("AP@0.50        {:.2}", report.ap_50);
    println!("AP@0.75        {:.2}", report.ap_75);
    println!("AR@[0.50:0.95] {:.2}", report.ar_50_95);
    if let Some(path) = args.json_out {
        write_file(
            &path,
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )?;
    }
    Ok(())
}

fn load_models(gt: &DatasetGT, paths: &[PathBuf]) -> Result<Vec<PredictionSet>> {
    paths
        .iter()
        .enumerate()
        .map(|(m, p)| Ok(load_predictions(p, gt)?.with_model_id(m)))
        .collect()
}

fn cmd_fuse(args: FuseArgs, log: &Log) -> Result<()> {
    let weights = if args.weights.is_empty() {
        vec![1.0; args.pred.len()]
    } else {
        args.weights
    };
    if weights.len() != args.pred.len() {
        return Err(Error::Config(format!(
            "--weights has {} values for {} prediction files",
            weights.len(),
            args.pred.len()
        )));
    }
    let config = EnsembleConfig::new(weights, args.iou_thr, args.skip_thr)?;
    let gt = load_gt(&args.gt)?;
    let sets = load_models(&gt, &args.pred)?;
    let fused = fuse_dataset(&sets, &config)?;
    write_predictions(&args.out, &fused, &gt)?;
    log.info(format!(
        "wrote {} fused detections to {}",
        fused.detections.len(),
        args.out.display()
    ));
    Ok(())
}

fn cmd_tune(args: TuneArgs, log: &Log) -> Result<()> {
    if args.trials == 0 {
        return Err(Error::Input("--trials must be at least 1".into()));
    }
    let gt = load_gt(&args.gt)?;
    let sets = load_models(&gt, &args.pred)?;
    let space = SearchSpace::default_for(sets.len());
    let study = tune(&gt, &sets, &space, args.trials, args.seed)?;
    write_file(&args.out, study.report_json())?;
    let best = &study.best;
    let weights: Vec<String> = best
        .config
        .weights
        .iter()
        .map(|w| format!("{w:.4}"))
        .collect();
    log.info(format!(
        "best trial {}: objective {:.2}, weights [{}], iou {:.4}, skip {:.4}",
        best.index,
        best.objective_value,
        weights.join(", "),
        best.config.iou_threshold,
        best.config.skip_threshold
    ));
    Ok(())
}

fn cmd_sweep(args: SweepArgs, log: &Log) -> Result<()> {
    let gt = load_gt(&args.gt)?;
    let entries = fs::read_dir(&args.pred_dir).map_err(|e| io_error(&args.pred_dir, e))?;
    let mut checkpoints = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(&args.pred_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        checkpoints.push((label, path));
    }
    if checkpoints.is_empty() {
        return Err(Error::Input(format!(
            "no .json prediction files in {}",
            args.pred_dir.display()
        )));
    }
    checkpoints.sort_by(|a, b| natural_cmp(&a.0, &b.0));
    log.info(format!("evaluating {} checkpoints", checkpoints.len()));
    let result = sweep(&gt, &checkpoints)?;
    result.write_csv(&args.out_csv)?;
    println!("{}", result.best_checkpoint);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    }
    let log = Log {
        quiet: cli.quiet,
        verbose: cli.verbose,
    };
    match cli.command {
        Command::Composite(cmd) => cmd_composite(cmd, &log),
        Command::Crop(args) => cmd_crop(args, &log),
        Command::Split(args) => cmd_split(args, &log),
        Command::Eval(args) => cmd_eval(args, &log),
        Command::Fuse(args) => cmd_fuse(args, &log),
        Command::Tune(args) => cmd_tune(args, &log),
        Command::Sweep(args) => cmd_sweep(args, &log),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 1 } else { 2 })
        }
    }
}
