//! `captcha-bench` command-line entry point.
//!
//! Every subcommand reads an optional JSON run configuration (`--config`) with
//! one section per subcommand plus the global keys `seed`, `jobs`, `out` and
//! `log_level`. Flags override configuration values, which override the
//! built-in defaults shown in `--help`. The last line on stderr is always a
//! single JSON record describing the outcome.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use captcha_bench::dataset::{materialize, mix_for_tuning, split_dataset, write_json, DatasetManifest, MixSpec, MixSplit,
    Split, SplitFractions};
use captcha_bench::detector::{
    evaluate_pipeline, DetectorError, DetectorSpec, EvalDataset, EvalRunConfig, ExternalConfig, OracleConfig,
    OracleNoise,
};
use captcha_bench::metrics::{rank_models, MetricsReport, ModelScoreRow, RankWeights};
use captcha_bench::slicing::{build_grid, export_slices, SliceParams};
use captcha_bench::synthesis::{build_dataset, list_images, load_rgb, SynthConfig};
use captcha_bench::{ClassId, Error, ErrorKind, ImageMeta, ImageSource};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

const LOG_ENV: &str = "CAPTCHA_BENCH_LOG";

#[derive(Parser, Debug)]
#[command(name = "captcha-bench", version, about = "Dataset synthesis, slicing and detection evaluation for webpage CAPTCHA detectors")]
#[command(after_help = "Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 detector failure.\n\
Log level comes from --log-level, else the CAPTCHA_BENCH_LOG environment variable, else the config file.")]
struct Cli {
    /// JSON run configuration with optional sections synth, split, slice, eval, mix, rank
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random draw (config key `seed`) [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it (config key `jobs`) [default: 1]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (config key `out`) [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// error, warn, info, debug or trace (config key `log_level`) [default: warn]
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Composite CAPTCHA crops onto webpage screenshots and write YOLO labels
    Synth(SynthArgs),
    /// Stratified train/valid/test split of a dataset into a new directory
    Split(SplitArgs),
    /// Compute slice grids for images, optionally exporting every slice
    Slice(SliceArgs),
    /// Run a detector over a labelled dataset and write metrics.json
    Eval(EvalArgs),
    /// Combine new and old datasets into a fine-tuning set
    Mix(MixArgs),
    /// Rank models by a weighted mean of precision, recall, F1 and mAP
    Rank(RankArgs),
}

#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
    log_level: Option<String>,
    synth: Option<SynthArgs>,
    split: Option<SplitArgs>,
    slice: Option<SliceArgs>,
    eval: Option<EvalArgs>,
    mix: Option<MixArgs>,
    rank: Option<RankArgs>,
}

/// Fills every unset field of `$flags` from `$file`.
macro_rules! overlay {
    ($flags:ident, $file:ident; opt: $($o:ident),*; list: $($l:ident),*; flag: $($b:ident),*) => {{
        $( if $flags.$o.is_none() { $flags.$o = $file.$o; } )*
        $( if $flags.$l.is_empty() { $flags.$l = $file.$l; } )*
        $( $flags.$b |= $file.$b; )*
        $flags
    }};
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, default)]
struct SynthArgs {
    /// Directory of webpage screenshots (config key `webpages`) [required]
    #[arg(long, value_name = "DIR")]
    webpages: Option<PathBuf>,
    /// CAPTCHA crops for one class as CLASS=DIR, repeatable; classes are text, puzzle, image, button
    /// (config key `captcha_dirs`, a list of the same strings) [required when --per-class > 0]
    #[arg(long = "captcha-dir", value_name = "CLASS=DIR")]
    captcha_dirs: Vec<String>,
    /// Composites per class (config key `per_class`) [default: 0]
    #[arg(long)]
    per_class: Option<usize>,
    /// Unmodified screenshots added as negatives (config key `negatives`) [default: 0]
    #[arg(long)]
    negatives: Option<usize>,
    /// Smallest pasted width as a fraction of page width (config key `scale_min`) [default: 0.15]
    #[arg(long)]
    scale_min: Option<f64>,
    /// Largest pasted width as a fraction of page width (config key `scale_max`) [default: 0.6]
    #[arg(long)]
    scale_max: Option<f64>,
    /// Minimum gap in pixels between a paste and the page edge (config key `margin`) [default: 0]
    #[arg(long)]
    margin: Option<u32>,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, default)]
struct SplitArgs {
    /// Dataset root containing manifest.json (config key `dataset`) [required]
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
    /// Training fraction (config key `train`) [default: 0.7]
    #[arg(long)]
    train: Option<f64>,
    /// Validation fraction (config key `valid`) [default: 0.2]
    #[arg(long)]
    valid: Option<f64>,
    /// Test fraction (config key `test`) [default: 0.1]
    #[arg(long)]
    test: Option<f64>,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, default)]
struct SliceArgs {
    /// Image files or directories of images, repeatable (config key `inputs`) [required]
    #[arg(long = "input", value_name = "PATH")]
    inputs: Vec<PathBuf>,
    /// Slice edge in pixels (config key `size`) [default: 640]
    #[arg(long)]
    size: Option<u32>,
    /// Overlap fraction in [0, 1) (config key `overlap`) [default: 0.25]
    #[arg(long)]
    overlap: Option<f64>,
    /// Slicing starts when the longer side reaches multiplier x size (config key `multiplier`) [default: 3]
    #[arg(long)]
    multiplier: Option<f64>,
    /// Write every slice as {image_id}_r{row}_c{col}.png under <out>/slices (config key `export`) [default: false]
    #[arg(long)]
    export: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DetectorKind {
    Oracle,
    External,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NoisePreset {
    /// Returns ground truth unchanged with confidence 1
    Zero,
    /// Jitters boxes and drops objects that shrink below --min-visible after resizing
    Downscale,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, default)]
struct EvalArgs {
    /// Dataset root containing manifest.json (config key `dataset`)
    #[arg(long, value_name = "DIR", conflicts_with_all = ["images", "labels"])]
    dataset: Option<PathBuf>,
    /// Manifest split to evaluate: train, valid, test, unsplit or all (config key `split`) [default: all]
    #[arg(long)]
    split: Option<String>,
    /// Image directory, used with --labels instead of --dataset (config key `images`)
    #[arg(long, value_name = "DIR", requires = "labels")]
    images: Option<PathBuf>,
    /// Label directory holding {stem}.txt per image (config key `labels`)
    #[arg(long, value_name = "DIR")]
    labels: Option<PathBuf>,
    /// Detector backend (config key `detector`) [default: oracle]
    #[arg(long, value_enum)]
    detector: Option<DetectorKind>,
    /// Oracle noise preset (config key `noise`) [default: zero]
    #[arg(long, value_enum)]
    noise: Option<NoisePreset>,
    /// Downscale preset: smallest visible side in pixels after resizing (config key `min_visible`) [default: 12]
    #[arg(long)]
    min_visible: Option<f64>,
    /// Downscale preset: drop probability for objects below --min-visible (config key `downscale_drop`) [default: 0.8]
    #[arg(long)]
    downscale_drop: Option<f64>,
    /// Full oracle noise model; overrides the preset (config only, key `oracle_noise`)
    #[arg(skip)]
    oracle_noise: Option<OracleNoise>,
    /// Square input side the oracle resizes windows to (config key `input_size`) [default: 640]
    #[arg(long)]
    input_size: Option<u32>,
    /// Inference time the oracle reports per call (config key `simulated_ms`) [default: 1]
    #[arg(long)]
    simulated_ms: Option<f64>,
    /// Slice oversized images before detection (config key `slice`) [default: false]
    #[arg(long)]
    slice: bool,
    /// Slice edge in pixels (config key `slice_size`) [default: 640]
    #[arg(long)]
    slice_size: Option<u32>,
    /// Slice overlap fraction (config key `overlap`) [default: 0.25]
    #[arg(long)]
    overlap: Option<f64>,
    /// Slicing activation multiplier (config key `multiplier`) [default: 3]
    #[arg(long)]
    multiplier: Option<f64>,
    /// IoU above which overlapping same-class slice detections merge (config key `merge_iou`) [default: 0.5]
    #[arg(long)]
    merge_iou: Option<f64>,
    /// IoU required to match a detection to ground truth (config key `match_iou`) [default: 0.5]
    #[arg(long)]
    match_iou: Option<f64>,
    /// Confidence threshold for counts and the confusion matrix (config key `confidence_threshold`) [default: 0.25]
    #[arg(long = "conf-threshold")]
    confidence_threshold: Option<f64>,
    /// Include per-class precision-recall curve data in metrics.json (config key `pr_curves`) [default: false]
    #[arg(long)]
    pr_curves: bool,
    /// External detector reply timeout in milliseconds (config key `timeout_ms`) [default: 30000]
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// External detector program and arguments, after `--` (config key `command`)
    #[arg(last = true, value_name = "COMMAND")]
    command: Vec<String>,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, default)]
struct MixArgs {
    /// Root of the newly collected dataset (config key `new`) [required]
    #[arg(long, value_name = "DIR")]
    new: Option<PathBuf>,
    /// Root of the previous training dataset (config key `old`) [required]
    #[arg(long, value_name = "DIR")]
    old: Option<PathBuf>,
    /// Records taken from the new dataset, in manifest order (config key `new_count`) [default: all]
    #[arg(long)]
    new_count: Option<usize>,
    /// Records sampled from the old dataset (config key `old_count`) [default: 0]
    #[arg(long)]
    old_count: Option<usize>,
    /// Exact training count; requires --valid (config key `train`)
    #[arg(long, requires = "valid", conflicts_with_all = ["train_frac", "valid_frac"])]
    train: Option<usize>,
    /// Exact validation count (config key `valid`)
    #[arg(long, requires = "train")]
    valid: Option<usize>,
    /// Training fraction, used when counts are not given (config key `train_frac`) [default: 0.8]
    #[arg(long)]
    train_frac: Option<f64>,
    /// Validation fraction (config key `valid_frac`) [default: 0.2]
    #[arg(long)]
    valid_frac: Option<f64>,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields, default)]
struct RankArgs {
    /// Weights as key=value pairs over f1, map, p, r; omitted keys are 0 (config key `weights`)
    /// [default: f1=0.5,map=0.25,p=0.125,r=0.125]
    #[arg(long)]
    weights: Option<String>,
    /// JSON array of {name, precision, recall, f1, map}, or an object with a `models` array
    /// (config key `input`) [required]
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
}

struct Globals {
    seed: u64,
    jobs: usize,
    out: PathBuf,
}

/// Failure carried to the exit code and the final stderr record.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match e.kind() {
            ErrorKind::Config => (1, "config"),
            ErrorKind::Data => (2, "data"),
            ErrorKind::Detector => (3, "detector"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Error::Config(message.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            return finish(None, Err(Failure { code: 1, kind: "usage", message: first }));
        }
    };
    let name = command_name(&cli.command);
    let outcome = run(cli);
    finish(Some(name), outcome)
}

fn finish(command: Option<&str>, outcome: Result<Vec<PathBuf>, Failure>) -> ExitCode {
    let (code, record) = match outcome {
        Ok(outputs) => (
            0,
            json!({ "status": "ok", "command": command, "exit_code": 0, "outputs": outputs }),
        ),
        Err(f) => {
            log::error!("{}", f.message);
            (
                f.code,
                json!({ "status": "error", "command": command, "exit_code": f.code, "kind": f.kind, "message": f.message }),
            )
        }
    };
    eprintln!("{record}");
    ExitCode::from(code)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Split(_) => "split",
        Command::Slice(_) => "slice",
        Command::Eval(_) => "eval",
        Command::Mix(_) => "mix",
        Command::Rank(_) => "rank",
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Failure> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| config_error(format!("invalid config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };

    let level = cli
        .log_level
        .or_else(|| std::env::var(LOG_ENV).ok())
        .or(file.log_level)
        .unwrap_or_else(|| "warn".into());
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();

    let globals = Globals {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        jobs: cli.jobs.or(file.jobs).unwrap_or(1),
        out: cli.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
    };
    if globals.jobs == 0 {
        return Err(config_error("jobs must be at least 1"));
    }

    match cli.command {
        Command::Synth(mut a) => {
            let f = file.synth.unwrap_or_default();
            run_synth(overlay!(a, f; opt: webpages, per_class, negatives, scale_min, scale_max, margin;
                list: captcha_dirs; flag:), &globals)
        }
        Command::Split(mut a) => {
            let f = file.split.unwrap_or_default();
            run_split(overlay!(a, f; opt: dataset, train, valid, test; list:; flag:), &globals)
        }
        Command::Slice(mut a) => {
            let f = file.slice.unwrap_or_default();
            run_slice(overlay!(a, f; opt: size, overlap, multiplier; list: inputs; flag: export), &globals)
        }
        Command::Eval(mut a) => {
            let f = file.eval.unwrap_or_default();
            run_eval(
                overlay!(a, f; opt: dataset, split, images, labels, detector, noise, min_visible, downscale_drop,
                    oracle_noise, input_size, simulated_ms, slice_size, overlap, multiplier, merge_iou, match_iou,
                    confidence_threshold, timeout_ms; list: command; flag: slice, pr_curves),
                &globals,
            )
        }
        Command::Mix(mut a) => {
            let f = file.mix.unwrap_or_default();
            run_mix(
                overlay!(a, f; opt: new, old, new_count, old_count, train, valid, train_frac, valid_frac; list:; flag:),
                &globals,
            )
        }
        Command::Rank(mut a) => {
            let f = file.rank.unwrap_or_default();
            run_rank(overlay!(a, f; opt: weights, input; list:; flag:), &globals)
        }
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| config_error(format!("--{flag} is required")))
}

fn now_unix_s() -> Option<u64> {
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

fn absolute(p: &Path) -> Result<PathBuf, Failure> {
    std::path::absolute(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())).into())
}

fn save_manifest(mut manifest: DatasetManifest, out: &Path) -> Result<Vec<PathBuf>, Failure> {
    manifest.run_metadata.created_unix_s = now_unix_s();
    Ok(vec![manifest.save(out)?])
}

fn run_synth(a: SynthArgs, g: &Globals) -> Result<Vec<PathBuf>, Failure> {
    let webpages = required(a.webpages, "webpages")?;
    let mut captcha_dirs = BTreeMap::new();
    for entry in &a.captcha_dirs {
        let (class, dir) = entry
            .split_once('=')
            .ok_or_else(|| config_error(format!("--captcha-dir expects CLASS=DIR, got {entry:?}")))?;
        let class: ClassId = class.parse()?;
        if captcha_dirs.insert(class, PathBuf::from(dir)).is_some() {
            return Err(config_error(format!("--captcha-dir given twice for class {class}")));
        }
    }
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        scale_range: (a.scale_min.unwrap_or(defaults.scale_range.0), a.scale_max.unwrap_or(defaults.scale_range.1)),
        per_class_target: a.per_class.unwrap_or(0),
        negative_count: a.negatives.unwrap_or(0),
        rng_seed: g.seed,
        margin: a.margin.unwrap_or(0),
    };
    let manifest = build_dataset(&webpages, &captcha_dirs, &cfg, &g.out, g.jobs)?;
    if !manifest.skipped.is_empty() {
        log::warn!("{} records skipped because no crop fit", manifest.skipped.len());
    }
    save_manifest(manifest, &g.out)
}

fn run_split(a: SplitArgs, g: &Globals) -> Result<Vec<PathBuf>, Failure> {
    let root = required(a.dataset, "dataset")?;
    if absolute(&root)? == absolute(&g.out)? {
        return Err(config_error("split output directory must differ from the input dataset"));
    }
    let d = SplitFractions::default();
    let fractions =
        SplitFractions::new(a.train.unwrap_or(d.train), a.valid.unwrap_or(d.valid), a.test.unwrap_or(d.test))?;
    let manifest = DatasetManifest::load(&root)?;
    let split = split_dataset(&manifest, &fractions, g.seed)?;
    let placed = materialize(&split, &g.out, |_| root.as_path())?;
    let [train, valid, test, _] = placed.split_counts();
    log::info!("split into train={train} valid={valid} test={test}");
    save_manifest(placed, &g.out)
}

fn run_slice(a: SliceArgs, g: &Globals) -> Result<Vec<PathBuf>, Failure> {
    if a.inputs.is_empty() {
        return Err(config_error("--input is required"));
    }
    let d = SliceParams::default();
    let params = SliceParams::new(
        a.size.unwrap_or(d.size),
        a.overlap.unwrap_or(d.overlap),
        a.multiplier.unwrap_or(d.activation_multiplier),
    )?;
    let mut files = Vec::new();
    for input in &a.inputs {
        if input.is_dir() {
            files.extend(list_images(input)?);
        } else {
            files.push(input.clone());
        }
    }

    let mut entries = Vec::new();
    let mut outputs = Vec::new();
    let slice_dir = g.out.join("slices");
    for path in &files {
        let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let (w, h) = image::image_dimensions(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let meta = ImageMeta::new(&id, w, h, ImageSource::RealWebpage)?;
        let grid = build_grid(&meta, &params);
        if a.export {
            outputs.extend(export_slices(&load_rgb(path)?, &grid, &slice_dir)?);
        }
        entries.push(json!({
            "image": path,
            "width": w,
            "height": h,
            "slices": grid.slices().collect::<Vec<_>>(),
            "grid": grid,
        }));
    }
    let report = g.out.join("slices.json");
    write_json(&report, &json!({ "params": params, "images": entries }))?;
    outputs.insert(0, report);
    Ok(outputs)
}

fn eval_config(a: &EvalArgs, g: &Globals) -> Result<EvalRunConfig, Failure> {
    let d = EvalRunConfig::default();
    let slicing = if a.slice {
        let p = SliceParams::default();
        Some(SliceParams::new(
            a.slice_size.unwrap_or(p.size),
            a.overlap.unwrap_or(p.overlap),
            a.multiplier.unwrap_or(p.activation_multiplier),
        )?)
    } else {
        None
    };
    let detector = match a.detector.unwrap_or(DetectorKind::Oracle) {
        DetectorKind::Oracle => {
            let noise = match (a.oracle_noise, a.noise.unwrap_or(NoisePreset::Zero)) {
                (Some(n), _) => n,
                (None, NoisePreset::Zero) => OracleNoise::zero(),
                (None, NoisePreset::Downscale) => {
                    OracleNoise::downscale_sensitive(a.min_visible.unwrap_or(12.0), a.downscale_drop.unwrap_or(0.8))
                }
            };
            let o = OracleConfig::default();
            DetectorSpec::Oracle(OracleConfig {
                noise,
                input_size: a.input_size.unwrap_or(o.input_size),
                seed: g.seed,
                simulated_ms: a.simulated_ms.unwrap_or(o.simulated_ms),
            })
        }
        DetectorKind::External => {
            if a.command.is_empty() {
                return Err(config_error("external detector needs a command after `--`"));
            }
            let mut e = ExternalConfig::new(a.command.clone());
            if let Some(t) = a.timeout_ms {
                e.timeout_ms = t;
            }
            DetectorSpec::External(e)
        }
    };
    let cfg = EvalRunConfig {
        slicing,
        merge_iou: a.merge_iou.unwrap_or(d.merge_iou),
        match_iou: a.match_iou.unwrap_or(d.match_iou),
        confidence_threshold: a.confidence_threshold.unwrap_or(d.confidence_threshold),
        detector,
        jobs: g.jobs,
        emit_pr_curves: a.pr_curves,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_split(name: &str) -> Result<Option<Split>, Failure> {
    Ok(match name {
        "all" => None,
        "train" => Some(Split::Train),
        "valid" => Some(Split::Valid),
        "test" => Some(Split::Test),
        "unsplit" => Some(Split::None),
        other => return Err(config_error(format!("unknown split {other:?}"))),
    })
}

fn run_eval(a: EvalArgs, g: &Globals) -> Result<Vec<PathBuf>, Failure> {
    let cfg = eval_config(&a, g)?;
    let split = parse_split(a.split.as_deref().unwrap_or("all"))?;
    let dataset = match (&a.dataset, &a.images, &a.labels) {
        (Some(root), None, None) => EvalDataset::from_manifest(root, &DatasetManifest::load(root)?, split)?,
        (None, Some(images), Some(labels)) => EvalDataset::from_dirs(images, labels)?,
        _ => return Err(config_error("give either --dataset or both --images and --labels")),
    };
    let mut report = evaluate_pipeline(&dataset, &cfg)?;
    report.run_metadata.created_unix_s = now_unix_s();
    report.run_metadata.environment = environment(g);
    let path = g.out.join("metrics.json");
    write_json(&path, &report)?;
    all_failed(&report)?;
    Ok(vec![path])
}

/// A run in which no image could be evaluated is a detector failure even
/// though the (empty) report was written.
fn all_failed(report: &MetricsReport) -> Result<(), Failure> {
    if report.counts.evaluated_images > 0 {
        return Ok(());
    }
    let first = report.failures.first().cloned().unwrap_or_default();
    Err(Error::Detector(DetectorError::Unavailable(format!("every image failed; first: {first}"))).into())
}

fn environment(g: &Globals) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("os".into(), std::env::consts::OS.into()),
        ("arch".into(), std::env::consts::ARCH.into()),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("jobs".into(), g.jobs.to_string()),
    ])
}

fn run_mix(a: MixArgs, g: &Globals) -> Result<Vec<PathBuf>, Failure> {
    let new_root = required(a.new, "new")?;
    let old_root = required(a.old, "old")?;
    for root in [&new_root, &old_root] {
        if absolute(root)? == absolute(&g.out)? {
            return Err(config_error("mix output directory must differ from its inputs"));
        }
    }
    let new = DatasetManifest::load(&new_root)?;
    let old = DatasetManifest::load(&old_root)?;
    let split = match (a.train, a.valid) {
        (Some(train), Some(valid)) => MixSplit::Counts { train, valid },
        (None, None) => MixSplit::Fractions {
            train: a.train_frac.unwrap_or(0.8),
            valid: a.valid_frac.unwrap_or(0.2),
        },
        _ => return Err(config_error("--train and --valid must be given together")),
    };
    let spec = MixSpec {
        new_count: a.new_count.unwrap_or(new.records.len()),
        old_count: a.old_count.unwrap_or(0),
        split,
        seed: g.seed,
    };
    let mixed = mix_for_tuning(&new, &old, &spec)?;
    let placed = materialize(&mixed, &g.out, |r| {
        if r.tag.as_deref() == Some("old") {
            old_root.as_path()
        } else {
            new_root.as_path()
        }
    })?;
    save_manifest(placed, &g.out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RankInput {
    Rows(Vec<ModelScoreRow>),
    Table { models: Vec<ModelScoreRow> },
}

fn run_rank(a: RankArgs, g: &Globals) -> Result<Vec<PathBuf>, Failure> {
    let input = required(a.input, "input")?;
    let weights: RankWeights = match &a.weights {
        Some(w) => w.parse()?,
        None => RankWeights::default(),
    };
    let text = std::fs::read_to_string(&input).map_err(|e| Error::Data(format!("{}: {e}", input.display())))?;
    let rows = match serde_json::from_str::<RankInput>(&text)
        .map_err(|e| Error::Data(format!("{}: expected a list of model rows: {e}", input.display())))?
    {
        RankInput::Rows(rows) | RankInput::Table { models: rows } => rows,
    };
    let ranked = rank_models(&rows, &weights)?;
    for r in &ranked {
        println!("{}\t{}\t{:.4}", r.rank, r.name, r.score);
    }
    let path = g.out.join("ranking.json");
    write_json(&path, &json!({ "weights": weights, "ranking": ranked }))?;
    Ok(vec![path])
}
