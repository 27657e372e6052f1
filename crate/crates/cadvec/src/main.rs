//! Command-line frontend for the vectorization toolkit.
//!
//! Exit codes: 0 on success, 2 when an input (file, argument, or format)
//! is unusable, 3 when a processing stage fails on valid input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cadvec::gapfill::{bridge_gaps, generate_gaps, GapGenError};
use cadvec::imageio::{load_gray, save_gray};
use cadvec::metrics::{iou, mse, patch_evaluate, rasterize};
use cadvec::ocr::{
    evaluate, load_model, read_digits_csv, save_model, synthetic_corpus, train_baseline,
};
use cadvec::pipeline::{
    generate_synthetic_map, obtain_model, parse_config, run, PipelineConfig,
    PipelineError, SyntheticConfig,
};
use cadvec::polygonize::{build_faces, euler_audit, export_plots, plot_records};
use cadvec::raster::{binarize, otsu_threshold, BinaryRaster, GrayRaster, Polarity};
use cadvec::skeleton::thin;
use cadvec::smoothing::{smooth, SmoothParams};
use cadvec::vecmodel::{parse_ascii, snap_and_prune, trace, write_ascii};

#[derive(Debug, Parser)]
#[command(name = "cadvec", version, about = "Vectorize scanned cadastral maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full raster-to-plots pipeline on a scanned map.
    Run(RunArgs),
    /// Generate a synthetic jittered-grid map with stamped plot numbers.
    Synth(SynthArgs),
    /// Cut synthetic gaps into a map's line work.
    Gengaps(GengapsArgs),
    /// Bridge gaps between stroke endpoints.
    Gapfill(GapfillArgs),
    /// Thin ink strokes to one-pixel centerlines.
    Thin(ThinArgs),
    /// Trace centerlines into the category text format.
    Trace(TraceArgs),
    /// Parse a category text file and write it back canonically.
    AsciiRoundtrip(AsciiRoundtripArgs),
    /// Clean a traced vector map (join errors, staircases, merges).
    Smooth(SmoothArgs),
    /// Write a labeled synthetic digit corpus to a directory.
    OcrSynth(OcrSynthArgs),
    /// Train the digit recognizer from a labeled sample directory.
    OcrTrain(OcrTrainArgs),
    /// Evaluate a recognizer and print its confusion matrix.
    OcrEval(OcrEvalArgs),
    /// Build plot polygons from a vector map and recognized digits.
    Polygonize(PolygonizeArgs),
    /// Score a vector map against a reference raster.
    Eval(EvalArgs),
}

/// Shared binarization flags for commands that read grayscale images.
#[derive(Debug, Args)]
struct BinarizeOpts {
    /// Threshold 0-255, or 'otsu' to pick one per image.
    #[arg(long, default_value = "128")]
    threshold: String,
    /// Treat light pixels as ink instead of dark ones.
    #[arg(long)]
    light: bool,
}

impl BinarizeOpts {
    fn binarize(&self, img: &GrayRaster) -> CliResult<BinaryRaster> {
        let threshold = if self.threshold == "otsu" {
            otsu_threshold(img)
        } else {
            self.threshold
                .parse()
                .map_err(|_| input_err(format!("bad threshold '{}'", self.threshold)))?
        };
        let polarity = if self.light {
            Polarity::LightInk
        } else {
            Polarity::DarkInk
        };
        Ok(binarize(img, threshold, polarity))
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Input scan (pgm or png).
    #[arg(long)]
    input: PathBuf,
    /// Pipeline configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. --set max_gap=8. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Recognizer model file (shorthand for --set model_path=...).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Where to write the plot polygons.
    #[arg(long)]
    out_geojson: Option<PathBuf>,
    /// Where to write the smoothed vector map.
    #[arg(long)]
    out_ascii: Option<PathBuf>,
    /// Where to write the run report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for numbered intermediate artifacts.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    rows: u32,
    #[arg(long, default_value_t = 10)]
    cols: u32,
    /// Nominal cell side in pixels.
    #[arg(long, default_value_t = 112)]
    cell: u32,
    /// Blank border around the grid.
    #[arg(long, default_value_t = 24)]
    margin: u32,
    /// Maximum node displacement in pixels.
    #[arg(long, default_value_t = 3.0)]
    jitter: f64,
    #[arg(long, default_value_t = 3)]
    stroke: u32,
    /// Digit glyph scale (glyphs are 5x7 at scale 1).
    #[arg(long, default_value_t = 3)]
    digit_scale: u32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output image (pgm or png).
    #[arg(long)]
    out: PathBuf,
    /// Optional ground-truth centerlines in the category text format.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GengapsArgs {
    input: PathBuf,
    #[command(flatten)]
    bin: BinarizeOpts,
    /// Number of gaps to cut.
    #[arg(long, default_value_t = 10)]
    gaps: usize,
    #[arg(long, default_value_t = 4)]
    len_min: u32,
    #[arg(long, default_value_t = 9)]
    len_max: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Corrupted output image.
    #[arg(long)]
    out: PathBuf,
    /// Optional copy of the intact binarized input.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GapfillArgs {
    input: PathBuf,
    #[command(flatten)]
    bin: BinarizeOpts,
    /// Longest endpoint distance to bridge, in pixels.
    #[arg(long, default_value_t = 12.0)]
    max_gap: f64,
    /// Largest stroke-to-chord angle deviation, in degrees.
    #[arg(long, default_value_t = 45.0)]
    max_angle: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ThinArgs {
    input: PathBuf,
    #[command(flatten)]
    bin: BinarizeOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TraceArgs {
    input: PathBuf,
    #[command(flatten)]
    bin: BinarizeOpts,
    /// The input is already a one-pixel skeleton; skip thinning.
    #[arg(long)]
    skip_thinning: bool,
    /// Snap radius for endpoint clustering; 0 disables snapping.
    #[arg(long, default_value_t = 1.5)]
    snap_tol: f64,
    /// Prune open stubs shorter than this; 0 keeps them.
    #[arg(long, default_value_t = 8.0)]
    dangle_len: f64,
    /// Output vector map in the category text format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AsciiRoundtripArgs {
    input: PathBuf,
    /// Canonical output; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SmoothArgs {
    input: PathBuf,
    /// Arcs shorter than this count as join errors.
    #[arg(long, default_value_t = 3.0)]
    join_threshold: f64,
    /// Cap on staircase sweeps.
    #[arg(long, default_value_t = 16)]
    max_passes: usize,
    #[arg(long)]
    out: PathBuf,
    /// Write the smoothing report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OcrSynthArgs {
    /// Samples per digit class.
    #[arg(long, default_value_t = 25)]
    per_class: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory; one subdirectory per digit.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct OcrTrainArgs {
    /// Labeled samples: subdirectories 0-9, or files named <digit>_*.pgm.
    #[arg(long)]
    samples: PathBuf,
    /// Where to write the trained model.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OcrEvalArgs {
    /// Model file; omitted trains the built-in baseline.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Labeled samples, same layout as ocr-train.
    #[arg(long)]
    samples: PathBuf,
}

#[derive(Debug, Args)]
struct PolygonizeArgs {
    /// Vector map in the category text format.
    input: PathBuf,
    /// Recognized digits (label,confidence,x,y csv).
    digits: PathBuf,
    /// Output GeoJSON.
    out: PathBuf,
    /// Digits below this confidence flag their plot for review.
    #[arg(long, default_value_t = 0.05)]
    review_margin: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Reference scan (pgm or png).
    #[arg(long)]
    reference: PathBuf,
    #[command(flatten)]
    bin: BinarizeOpts,
    /// Candidate vector map in the category text format.
    #[arg(long)]
    candidate: PathBuf,
    /// Stroke width for rasterizing the candidate.
    #[arg(long, default_value_t = 3)]
    stroke: u32,
    /// Tile side for patch metrics.
    #[arg(long, default_value_t = 64)]
    patch: u32,
    /// Write the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

enum CliError {
    /// Unusable input: missing file, bad format, bad argument value.
    Input(String),
    /// A processing stage failed on valid input.
    Stage(String),
}

type CliResult<T> = Result<T, CliError>;

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn stage_fail(msg: impl std::fmt::Display) -> CliError {
    CliError::Stage(msg.to_string())
}

fn load_image(path: &Path) -> CliResult<GrayRaster> {
    load_gray(path).map_err(|e| input_err(e.to_string()))
}

fn save_image(path: &Path, img: &GrayRaster) -> CliResult<()> {
    save_gray(path, img).map_err(|e| input_err(e.to_string()))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, content: &str) -> CliResult<()> {
    fs::write(path, content).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Stage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Gengaps(args) => cmd_gengaps(args),
        Command::Gapfill(args) => cmd_gapfill(args),
        Command::Thin(args) => cmd_thin(args),
        Command::Trace(args) => cmd_trace(args),
        Command::AsciiRoundtrip(args) => cmd_ascii_roundtrip(args),
        Command::Smooth(args) => cmd_smooth(args),
        Command::OcrSynth(args) => cmd_ocr_synth(args),
        Command::OcrTrain(args) => cmd_ocr_train(args),
        Command::OcrEval(args) => cmd_ocr_eval(args),
        Command::Polygonize(args) => cmd_polygonize(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(&read_text(path)?).map_err(|e| input_err(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    for pair in &args.sets {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| input_err(format!("--set needs KEY=VALUE, got '{pair}'")))?;
        cfg.set(key.trim(), value.trim()).map_err(input_err)?;
    }
    if let Some(model) = &args.model {
        cfg.model_path = Some(model.clone());
    }

    let img = load_image(&args.input)?;
    let out = run(&img, &cfg, args.dump_dir.as_deref()).map_err(|e| match e {
        PipelineError::Config { .. } => input_err(e.to_string()),
        PipelineError::Stage { .. } => stage_fail(e),
    })?;

    if let Some(path) = &args.out_geojson {
        write_text(path, &out.geojson)?;
    }
    if let Some(path) = &args.out_ascii {
        write_text(path, &out.ascii)?;
    }
    if let Some(path) = &args.report {
        let json =
            serde_json::to_string_pretty(&out.report).expect("report serializes infallibly");
        write_text(path, &(json + "\n"))?;
    }
    let total_ms: f64 = out.report.stage_ms.iter().map(|t| t.ms).sum();
    println!(
        "plots {} numbered {} review {} outside {} euler {} in {:.0} ms",
        out.report.faces,
        out.report.plots_with_numbers,
        out.report.review_flags,
        out.report.digits_outside,
        if out.report.euler_consistent { "ok" } else { "FAIL" },
        total_ms
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let cfg = SyntheticConfig {
        rows: args.rows,
        cols: args.cols,
        cell: args.cell,
        margin: args.margin,
        jitter: args.jitter,
        stroke: args.stroke,
        digit_scale: args.digit_scale,
        seed: args.seed,
    };
    let (img, truth) = generate_synthetic_map(&cfg);
    save_image(&args.out, &img)?;
    if let Some(path) = &args.truth {
        write_text(path, &write_ascii(&truth.centerlines))?;
    }
    println!(
        "map {}x{} with {} plots",
        img.width(),
        img.height(),
        truth.rings.len()
    );
    Ok(())
}

fn cmd_gengaps(args: GengapsArgs) -> CliResult<()> {
    let img = load_image(&args.input)?;
    let bin = args.bin.binarize(&img)?;
    let (corrupted, truth) = generate_gaps(&bin, args.gaps, (args.len_min, args.len_max), args.seed)
        .map_err(|e| match e {
            GapGenError::BadLengthRange { .. } => input_err(e.to_string()),
            _ => stage_fail(e),
        })?;
    save_image(&args.out, &corrupted.to_gray_ink_black())?;
    if let Some(path) = &args.truth {
        save_image(path, &truth.to_gray_ink_black())?;
    }
    println!("cut {} gaps", args.gaps);
    Ok(())
}

fn cmd_gapfill(args: GapfillArgs) -> CliResult<()> {
    let img = load_image(&args.input)?;
    let bin = args.bin.binarize(&img)?;
    let (bridged, bridges) = bridge_gaps(&bin, args.max_gap, args.max_angle);
    save_image(&args.out, &bridged.to_gray_ink_black())?;
    println!("bridged {} gaps", bridges.len());
    Ok(())
}

fn cmd_thin(args: ThinArgs) -> CliResult<()> {
    let img = load_image(&args.input)?;
    let bin = args.bin.binarize(&img)?;
    let skel = thin(&bin);
    save_image(&args.out, &skel.to_gray_ink_black())?;
    println!(
        "thinned {} ink pixels to {}",
        bin.count_foreground(),
        skel.count_foreground()
    );
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> CliResult<()> {
    let img = load_image(&args.input)?;
    let bin = args.bin.binarize(&img)?;
    let skel = if args.skip_thinning { bin } else { thin(&bin) };
    let mut v = trace(&skel);
    if args.snap_tol > 0.0 || args.dangle_len > 0.0 {
        v = snap_and_prune(v, args.snap_tol, args.dangle_len);
    }
    write_text(&args.out, &write_ascii(&v))?;
    println!("traced {} categories", v.len());
    Ok(())
}

fn cmd_ascii_roundtrip(args: AsciiRoundtripArgs) -> CliResult<()> {
    let v = parse_ascii(&read_text(&args.input)?).map_err(|e| input_err(e.to_string()))?;
    let canonical = write_ascii(&v);
    match &args.out {
        Some(path) => write_text(path, &canonical)?,
        None => print!("{canonical}"),
    }
    Ok(())
}

fn cmd_smooth(args: SmoothArgs) -> CliResult<()> {
    let v = parse_ascii(&read_text(&args.input)?).map_err(|e| input_err(e.to_string()))?;
    let params = SmoothParams {
        len_threshold: args.join_threshold,
        max_passes: args.max_passes,
    };
    let (smoothed, report) = smooth(v, &params);
    write_text(&args.out, &write_ascii(&smoothed))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes infallibly");
    match &args.report {
        Some(path) => write_text(path, &(json.clone() + "\n"))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_ocr_synth(args: OcrSynthArgs) -> CliResult<()> {
    let samples = synthetic_corpus(args.per_class, args.seed);
    let mut index = [0usize; 10];
    for (label, patch) in &samples {
        let dir = args.out_dir.join(label.to_string());
        fs::create_dir_all(&dir).map_err(|e| input_err(format!("{}: {e}", dir.display())))?;
        let n = index[usize::from(*label)];
        index[usize::from(*label)] += 1;
        save_image(&dir.join(format!("{n:04}.pgm")), patch)?;
    }
    println!("wrote {} samples under {}", samples.len(), args.out_dir.display());
    Ok(())
}

/// Reads a labeled sample directory: subdirectories named 0-9 hold samples
/// of that digit, and loose files labeled by a `<digit>_` name prefix are
/// accepted too. Paths are visited in sorted order.
fn read_labeled_samples(dir: &Path) -> CliResult<Vec<(u8, GrayRaster)>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| input_err(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();

    let mut samples = Vec::new();
    for entry in entries {
        let name = entry
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if entry.is_dir() {
            let label = match name.parse::<u8>() {
                Ok(d) if d <= 9 => d,
                _ => continue,
            };
            let mut files: Vec<PathBuf> = fs::read_dir(&entry)
                .map_err(|e| input_err(format!("{}: {e}", entry.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            files.sort();
            for file in files {
                samples.push((label, load_image(&file)?));
            }
        } else if name.len() > 1 && name.as_bytes()[1] == b'_' {
            let label = name.as_bytes()[0];
            if label.is_ascii_digit() {
                samples.push((label - b'0', load_image(&entry)?));
            }
        }
    }
    if samples.is_empty() {
        return Err(input_err(format!(
            "no labeled samples under {}",
            dir.display()
        )));
    }
    Ok(samples)
}

fn cmd_ocr_train(args: OcrTrainArgs) -> CliResult<()> {
    let samples = read_labeled_samples(&args.samples)?;
    let model = train_baseline(&samples).map_err(stage_fail)?;
    save_model(&model, &args.out).map_err(|e| input_err(e.to_string()))?;
    println!(
        "trained on {} samples, per class {:?}",
        samples.len(),
        model.sample_counts()
    );
    Ok(())
}

fn cmd_ocr_eval(args: OcrEvalArgs) -> CliResult<()> {
    let model = match &args.model {
        Some(path) => load_model(path).map_err(|e| input_err(e.to_string()))?,
        None => obtain_model(&PipelineConfig::default()).map_err(stage_fail)?,
    };
    let samples = read_labeled_samples(&args.samples)?;
    let report = evaluate(&model, &samples).map_err(stage_fail)?;
    print!("{}", report.render_table());
    Ok(())
}

fn cmd_polygonize(args: PolygonizeArgs) -> CliResult<()> {
    let v = parse_ascii(&read_text(&args.input)?).map_err(|e| input_err(e.to_string()))?;
    let detections = read_digits_csv(&read_text(&args.digits)?)
        .map_err(|e| input_err(e.to_string()))?;
    let faces = build_faces(&v);
    let audits = euler_audit(&v);
    let euler_ok = audits.iter().all(|a| a.holds());
    let (records, outside) = plot_records(faces, &detections, args.review_margin);
    write_text(&args.out, &export_plots(&records))?;
    println!(
        "plots {} numbered {} outside {} euler {}",
        records.len(),
        records.iter().filter(|r| !r.plot_number.is_empty()).count(),
        outside.len(),
        if euler_ok { "ok" } else { "FAIL" }
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let reference_img = load_image(&args.reference)?;
    let reference = args.bin.binarize(&reference_img)?;
    let candidate = parse_ascii(&read_text(&args.candidate)?)
        .map_err(|e| input_err(e.to_string()))?;

    let rendered = rasterize(
        &candidate,
        reference.width(),
        reference.height(),
        args.stroke,
    );
    let global_iou = iou(&reference, &rendered).map_err(stage_fail)?;
    let global_mse = mse(&reference, &rendered).map_err(stage_fail)?;
    let patch = patch_evaluate(&reference, &candidate, args.patch, args.stroke);

    println!("iou {global_iou:.4} mse {global_mse:.4}");
    if let Some(stats) = &patch.hausdorff_stats {
        println!(
            "hausdorff/tile mean {:.3} median {:.3} p90 {:.3}",
            stats.mean, stats.median, stats.p90
        );
    }
    if let Some(stats) = &patch.frechet_stats {
        println!(
            "frechet/tile mean {:.3} median {:.3} p90 {:.3}",
            stats.mean, stats.median, stats.p90
        );
    }
    println!(
        "tiles {} skipped {} (hausdorff n/a {}, frechet n/a {})",
        patch.tiles.len(),
        patch.skipped_empty,
        patch.hausdorff_skipped,
        patch.frechet_skipped
    );

    if let Some(path) = &args.report {
        #[derive(serde::Serialize)]
        struct EvalDump<'a> {
            iou: f64,
            mse: f64,
            patch: &'a cadvec::metrics::PatchReport,
        }
        let json = serde_json::to_string_pretty(&EvalDump {
            iou: global_iou,
            mse: global_mse,
            patch: &patch,
        })
        .expect("report serializes infallibly");
        write_text(path, &(json + "\n"))?;
    }
    Ok(())
}
