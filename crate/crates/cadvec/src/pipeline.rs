//! End-to-end driver: scanned raster in, plot polygons and a cleaned vector
//! map out.
//!
//! Stage order: binarize, bridge gaps, label components, separate boundary
//! from digits, recognize digits, thin, trace, snap and prune, smooth,
//! polygonize, assign digits, export. Each stage is timed, key counters are
//! collected into a [`RunReport`], and with a dump directory every
//! intermediate artifact is written as it is produced, so an aborted run
//! still leaves everything up to the failing stage on disk.
//!
//! Also hosts the synthetic map generator used for benchmarks and for
//! training the default digit recognizer.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::gapfill::bridge_gaps;
use crate::glyphs;
use crate::imageio::save_gray;
use crate::metrics::rasterize;
use crate::ocr::{
    classify, load_model, save_model, synthetic_corpus, train_baseline, write_digits_csv,
    DigitDetection, RecognizerModel,
};
use crate::polygonize::{
    build_faces, euler_audit, export_plots, plot_records, ring_signed_area, PlotRecord,
};
use crate::raster::{
    binarize, connected_components, default_digit_area_max, extract_digit_patch, otsu_threshold,
    separate_boundary_and_digits, GrayRaster, Polarity,
};
use crate::skeleton::thin;
use crate::smoothing::{smooth, SmoothParams, SmoothReport};
use crate::vecmodel::{snap_and_prune, trace, write_ascii, Category, Point, VectorMap};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage}: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

fn stage_err(stage: &'static str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Every tunable of the pipeline, persisted as flat `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Binarization threshold; `None` selects Otsu's method per image.
    pub threshold: Option<u8>,
    /// Ink is lighter than the threshold instead of darker.
    pub light_ink: bool,
    /// Longest endpoint gap (pixels) that gap bridging will close.
    pub max_gap: f64,
    /// Largest deviation (degrees) between stroke ends and their chord.
    pub max_angle_dev: f64,
    /// Components smaller than this are noise, never digits.
    pub noise_area_min: usize,
    /// Components up to this area are digit candidates; 0 means twice the
    /// median non-boundary component area.
    pub digit_area_max: usize,
    /// Endpoint snap radius (pixels) after tracing.
    pub snap_tol: f64,
    /// Open stubs shorter than this are pruned after tracing.
    pub dangle_len: f64,
    /// Arcs shorter than this count as join errors while smoothing.
    pub join_len_threshold: f64,
    /// Cap on staircase sweeps while smoothing.
    pub max_passes: usize,
    /// Digits below this confidence flag their plot for review.
    pub review_margin: f64,
    /// Stroke width when rasterizing vectors for evaluation.
    pub stroke: u32,
    /// Tile side for patch evaluation.
    pub patch_size: u32,
    /// Recognizer model file; absent or empty trains a fresh baseline (and
    /// saves it here when a path is given).
    pub model_path: Option<PathBuf>,
    /// Samples per digit class when training the baseline recognizer.
    pub train_per_class: usize,
    /// Seed for the baseline training corpus.
    pub train_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: Some(128),
            light_ink: false,
            max_gap: 12.0,
            max_angle_dev: 45.0,
            noise_area_min: 8,
            digit_area_max: 0,
            snap_tol: 1.5,
            dangle_len: 8.0,
            join_len_threshold: 3.0,
            max_passes: 16,
            review_margin: 0.05,
            stroke: 3,
            patch_size: 64,
            model_path: None,
            train_per_class: 25,
            train_seed: 7,
        }
    }
}

impl PipelineConfig {
    /// Applies one `key = value` assignment; used by both the config file
    /// parser and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(value: &str, what: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("bad {what} value '{value}'"))
        }
        match key {
            "threshold" => {
                self.threshold = if value == "otsu" {
                    None
                } else {
                    Some(num(value, "threshold")?)
                }
            }
            "polarity" => {
                self.light_ink = match value {
                    "dark" => false,
                    "light" => true,
                    other => return Err(format!("polarity must be dark or light, not '{other}'")),
                }
            }
            "max_gap" => self.max_gap = num(value, "max_gap")?,
            "max_angle_dev" => self.max_angle_dev = num(value, "max_angle_dev")?,
            "noise_area_min" => self.noise_area_min = num(value, "noise_area_min")?,
            "digit_area_max" => {
                self.digit_area_max = if value == "auto" {
                    0
                } else {
                    num(value, "digit_area_max")?
                }
            }
            "snap_tol" => self.snap_tol = num(value, "snap_tol")?,
            "dangle_len" => self.dangle_len = num(value, "dangle_len")?,
            "join_len_threshold" => self.join_len_threshold = num(value, "join_len_threshold")?,
            "max_passes" => self.max_passes = num(value, "max_passes")?,
            "review_margin" => self.review_margin = num(value, "review_margin")?,
            "stroke" => self.stroke = num(value, "stroke")?,
            "patch_size" => self.patch_size = num(value, "patch_size")?,
            "model_path" => {
                self.model_path = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "train_per_class" => self.train_per_class = num(value, "train_per_class")?,
            "train_seed" => self.train_seed = num(value, "train_seed")?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }
}

/// Serializes a config as `key = value` lines, one per setting.
pub fn write_config(cfg: &PipelineConfig) -> String {
    let threshold = match cfg.threshold {
        Some(t) => t.to_string(),
        None => "otsu".into(),
    };
    let digit_area_max = if cfg.digit_area_max == 0 {
        "auto".into()
    } else {
        cfg.digit_area_max.to_string()
    };
    format!(
        "threshold = {threshold}\n\
         polarity = {}\n\
         max_gap = {}\n\
         max_angle_dev = {}\n\
         noise_area_min = {}\n\
         digit_area_max = {digit_area_max}\n\
         snap_tol = {}\n\
         dangle_len = {}\n\
         join_len_threshold = {}\n\
         max_passes = {}\n\
         review_margin = {}\n\
         stroke = {}\n\
         patch_size = {}\n\
         model_path = {}\n\
         train_per_class = {}\n\
         train_seed = {}\n",
        if cfg.light_ink { "light" } else { "dark" },
        cfg.max_gap,
        cfg.max_angle_dev,
        cfg.noise_area_min,
        cfg.snap_tol,
        cfg.dangle_len,
        cfg.join_len_threshold,
        cfg.max_passes,
        cfg.review_margin,
        cfg.stroke,
        cfg.patch_size,
        cfg.model_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
        cfg.train_per_class,
        cfg.train_seed,
    )
}

/// Parses `key = value` lines; `#` starts a comment and blank lines are
/// skipped. Unknown keys and bad values are errors with their line number.
pub fn parse_config(text: &str) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(PipelineError::Config {
            line: i + 1,
            message: format!("expected 'key = value', found '{line}'"),
        })?;
        cfg.set(key.trim(), value.trim())
            .map_err(|message| PipelineError::Config {
                line: i + 1,
                message,
            })?;
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub ms: f64,
}

/// Counters and timings from one pipeline run.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunReport {
    pub width: u32,
    pub height: u32,
    pub threshold_used: u8,
    pub bridges_drawn: usize,
    pub components: usize,
    pub digit_components: usize,
    pub noise_components: usize,
    pub categories_traced: usize,
    pub categories_after_snap: usize,
    pub categories_after_smooth: usize,
    pub smoothing: SmoothReport,
    pub faces: usize,
    pub plots_with_numbers: usize,
    pub review_flags: usize,
    pub digits_outside: usize,
    pub euler_consistent: bool,
    pub stage_ms: Vec<StageTiming>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// GeoJSON FeatureCollection of the plots.
    pub geojson: String,
    /// Smoothed vector map in the category text format.
    pub ascii: String,
    pub report: RunReport,
    pub records: Vec<PlotRecord>,
}

struct Dumper<'a> {
    dir: Option<&'a Path>,
}

impl Dumper<'_> {
    fn text(&self, name: &str, content: &str) -> Result<(), PipelineError> {
        if let Some(dir) = self.dir {
            fs::write(dir.join(name), content)
                .map_err(|e| stage_err("dump", format!("{name}: {e}")))?;
        }
        Ok(())
    }

    fn gray(&self, name: &str, img: &GrayRaster) -> Result<(), PipelineError> {
        if let Some(dir) = self.dir {
            save_gray(&dir.join(name), img).map_err(|e| stage_err("dump", e))?;
        }
        Ok(())
    }
}

/// Loads the configured recognizer model, or trains the baseline from the
/// built-in synthetic corpus. A configured path that does not exist yet
/// receives the freshly trained model.
pub fn obtain_model(cfg: &PipelineConfig) -> Result<RecognizerModel, PipelineError> {
    match &cfg.model_path {
        Some(path) if path.exists() => load_model(path).map_err(|e| stage_err("model", e)),
        Some(path) => {
            let model = train_baseline(&synthetic_corpus(cfg.train_per_class, cfg.train_seed))
                .map_err(|e| stage_err("model", e))?;
            save_model(&model, path).map_err(|e| stage_err("model", e))?;
            Ok(model)
        }
        None => train_baseline(&synthetic_corpus(cfg.train_per_class, cfg.train_seed))
            .map_err(|e| stage_err("model", e)),
    }
}

/// Runs the full pipeline on a grayscale scan. With `dump_dir` set, numbered
/// intermediate artifacts are written into it as each stage finishes.
pub fn run(
    input: &GrayRaster,
    cfg: &PipelineConfig,
    dump_dir: Option<&Path>,
) -> Result<RunOutput, PipelineError> {
    if let Some(dir) = dump_dir {
        fs::create_dir_all(dir).map_err(|e| stage_err("dump", e))?;
    }
    let dump = Dumper { dir: dump_dir };
    // A dump directory should replay without guesswork, so it starts with
    // the exact configuration this run used.
    dump.text("00_config.txt", &write_config(cfg))?;
    let mut stage_ms = Vec::new();
    let mut timer = Instant::now();
    let lap = |stage: &'static str, stage_ms: &mut Vec<StageTiming>, timer: &mut Instant| {
        stage_ms.push(StageTiming {
            stage,
            ms: timer.elapsed().as_secs_f64() * 1000.0,
        });
        *timer = Instant::now();
    };

    let (width, height) = (input.width(), input.height());

    let threshold_used = cfg.threshold.unwrap_or_else(|| otsu_threshold(input));
    let polarity = if cfg.light_ink {
        Polarity::LightInk
    } else {
        Polarity::DarkInk
    };
    let bin = binarize(input, threshold_used, polarity);
    lap("binarize", &mut stage_ms, &mut timer);
    dump.gray("01_binarized.pgm", &bin.to_gray_ink_black())?;

    let (bridged, bridges) = bridge_gaps(&bin, cfg.max_gap, cfg.max_angle_dev);
    lap("bridge", &mut stage_ms, &mut timer);
    dump.gray("02_bridged.pgm", &bridged.to_gray_ink_black())?;

    let comps = connected_components(&bridged);
    let components = comps.len();
    lap("components", &mut stage_ms, &mut timer);

    let digit_area_max = if cfg.digit_area_max > 0 {
        cfg.digit_area_max
    } else {
        let largest = comps
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.area().cmp(&b.area()).then(ib.cmp(ia)))
            .map(|(i, _)| i);
        let others: Vec<usize> = comps
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != largest)
            .map(|(_, c)| c.area())
            .collect();
        default_digit_area_max(&others)
    };
    let sep = separate_boundary_and_digits(comps, digit_area_max, cfg.noise_area_min)
        .map_err(|e| stage_err("separate", e))?;
    let digit_components = sep.digits.len();
    let noise_components = sep.noise.len();
    lap("separate", &mut stage_ms, &mut timer);

    let model = obtain_model(cfg)?;
    let mut detections = Vec::with_capacity(sep.digits.len());
    for comp in &sep.digits {
        let (patch, centroid) = extract_digit_patch(comp);
        let (label, confidence) = classify(&model, &patch).map_err(|e| stage_err("digits", e))?;
        // Detection positions live in map coordinates (y up), matching the
        // traced geometry.
        detections.push(DigitDetection {
            label,
            confidence,
            position: (centroid.0, f64::from(height) - centroid.1),
        });
    }
    lap("digits", &mut stage_ms, &mut timer);
    dump.text("03_digits.csv", &write_digits_csv(&detections))?;

    let boundary = sep.boundary_raster(width, height);
    let skel = thin(&boundary);
    lap("thin", &mut stage_ms, &mut timer);
    dump.gray("04_skeleton.pgm", &skel.to_gray_ink_black())?;

    let traced = trace(&skel);
    let categories_traced = traced.len();
    lap("trace", &mut stage_ms, &mut timer);
    dump.text("05_traced.txt", &write_ascii(&traced))?;

    let snapped = snap_and_prune(traced, cfg.snap_tol, cfg.dangle_len);
    let categories_after_snap = snapped.len();
    lap("snap", &mut stage_ms, &mut timer);
    dump.text("06_snapped.txt", &write_ascii(&snapped))?;

    let (smoothed, smoothing) = smooth(
        snapped,
        &SmoothParams {
            len_threshold: cfg.join_len_threshold,
            max_passes: cfg.max_passes,
        },
    );
    let categories_after_smooth = smoothed.len();
    let ascii = write_ascii(&smoothed);
    lap("smooth", &mut stage_ms, &mut timer);
    dump.text("07_smoothed.txt", &ascii)?;

    let faces = build_faces(&smoothed);
    let euler_consistent = euler_audit(&smoothed).iter().all(|a| a.holds());
    let face_count = faces.len();
    lap("polygonize", &mut stage_ms, &mut timer);

    let (records, outside) = plot_records(faces, &detections, cfg.review_margin);
    lap("assign", &mut stage_ms, &mut timer);

    let geojson = export_plots(&records);
    lap("export", &mut stage_ms, &mut timer);
    dump.text("08_plots.geojson", &geojson)?;

    let report = RunReport {
        width,
        height,
        threshold_used,
        bridges_drawn: bridges.len(),
        components,
        digit_components,
        noise_components,
        categories_traced,
        categories_after_snap,
        categories_after_smooth,
        smoothing,
        faces: face_count,
        plots_with_numbers: records.iter().filter(|r| !r.plot_number.is_empty()).count(),
        review_flags: records.iter().filter(|r| r.review_flag).count(),
        digits_outside: outside.len(),
        euler_consistent,
        stage_ms,
    };
    Ok(RunOutput {
        geojson,
        ascii,
        report,
        records,
    })
}

/// Layout of a synthetic test map: a jittered grid of quadrilateral plots,
/// each labeled with its sequential plot number.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub rows: u32,
    pub cols: u32,
    /// Nominal cell side in pixels.
    pub cell: u32,
    /// Blank border around the grid.
    pub margin: u32,
    /// Maximum node displacement in pixels.
    pub jitter: f64,
    /// Boundary stroke width.
    pub stroke: u32,
    /// Digit glyph scale (glyphs are 5x7 at scale 1).
    pub digit_scale: u32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            rows: 10,
            cols: 10,
            // Wide enough that a three-digit number keeps clear of the
            // jittered boundary strokes by more than the bridging radius.
            cell: 112,
            margin: 24,
            jitter: 3.0,
            stroke: 3,
            digit_scale: 3,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn dimensions(&self) -> (u32, u32) {
        (
            2 * self.margin + self.cols * self.cell,
            2 * self.margin + self.rows * self.cell,
        )
    }
}

/// What the generated map really contains, for scoring a pipeline run.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Ideal boundary centerlines in map coordinates.
    pub centerlines: VectorMap,
    /// One closed counterclockwise ring per plot, row-major cell order.
    pub rings: Vec<Vec<Point>>,
    /// Plot numbers, parallel to `rings`.
    pub numbers: Vec<String>,
    /// Cell label anchors (map coordinates), parallel to `rings`.
    pub anchors: Vec<Point>,
}

/// Draws a jittered grid map with stamped plot numbers. Deterministic per
/// configuration.
pub fn generate_synthetic_map(cfg: &SyntheticConfig) -> (GrayRaster, GroundTruth) {
    assert!(cfg.rows > 0 && cfg.cols > 0, "grid must be non-empty");
    assert!(
        cfg.jitter + f64::from(cfg.stroke) < f64::from(cfg.margin),
        "margin must absorb jitter and stroke"
    );
    let (width, height) = cfg.dimensions();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Node positions in continuous pixel space (x right, y down).
    let mut nodes = vec![vec![(0.0f64, 0.0f64); cfg.cols as usize + 1]; cfg.rows as usize + 1];
    for r in 0..=cfg.rows as usize {
        for c in 0..=cfg.cols as usize {
            let base_x = f64::from(cfg.margin + c as u32 * cfg.cell);
            let base_y = f64::from(cfg.margin + r as u32 * cfg.cell);
            let dx = rng.gen_range(-cfg.jitter..=cfg.jitter);
            let dy = rng.gen_range(-cfg.jitter..=cfg.jitter);
            nodes[r][c] = (base_x + dx, base_y + dy);
        }
    }
    let to_map = |(x, y): (f64, f64)| Point::new(x + 0.5, (f64::from(height) - 1.0 - y) + 0.5);

    // Boundary centerlines: one category per grid edge.
    let mut cats = Vec::new();
    let mut next_id = 1u32;
    for r in 0..=cfg.rows as usize {
        for c in 0..=cfg.cols as usize {
            if c < cfg.cols as usize {
                cats.push(Category::new(
                    next_id,
                    vec![to_map(nodes[r][c]), to_map(nodes[r][c + 1])],
                ));
                next_id += 1;
            }
            if r < cfg.rows as usize {
                cats.push(Category::new(
                    next_id,
                    vec![to_map(nodes[r][c]), to_map(nodes[r + 1][c])],
                ));
                next_id += 1;
            }
        }
    }
    let centerlines = VectorMap::from_categories(cats);

    let mut img = rasterize(&centerlines, width, height, cfg.stroke).to_gray_ink_black();

    let mut rings = Vec::new();
    let mut numbers = Vec::new();
    let mut anchors = Vec::new();
    for r in 0..cfg.rows as usize {
        for c in 0..cfg.cols as usize {
            let corners = [
                nodes[r][c],
                nodes[r][c + 1],
                nodes[r + 1][c + 1],
                nodes[r + 1][c],
            ];
            let mut ring: Vec<Point> = corners.iter().map(|&p| to_map(p)).collect();
            ring.push(ring[0]);
            if ring_signed_area(&ring) < 0.0 {
                ring.reverse();
            }
            let number = (r * cfg.cols as usize + c + 1).to_string();

            let cx = corners.iter().map(|p| p.0).sum::<f64>() / 4.0;
            let cy = corners.iter().map(|p| p.1).sum::<f64>() / 4.0;
            // Digit spacing stays wider than the default gap-bridging
            // radius (12 px); closer glyphs would be welded into one
            // component before separation ever sees them.
            const DIGIT_GAP: u32 = 13;
            let text_w = glyphs::number_width(&number, cfg.digit_scale, DIGIT_GAP);
            let text_h = glyphs::GLYPH_HEIGHT * cfg.digit_scale;
            let left = (cx - f64::from(text_w) / 2.0).round() as u32;
            let top = (cy - f64::from(text_h) / 2.0).round() as u32;
            glyphs::stamp_number(&mut img, &number, top, left, cfg.digit_scale, DIGIT_GAP, 0);

            anchors.push(to_map((cx, cy)));
            rings.push(ring);
            numbers.push(number);
        }
    }

    (
        img,
        GroundTruth {
            centerlines,
            rings,
            numbers,
            anchors,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polygonize::{parse_plots, ring_contains};
    use crate::vecmodel::parse_ascii;

    #[test]
    fn config_round_trips_through_text() {
        let default = PipelineConfig::default();
        assert_eq!(parse_config(&write_config(&default)).unwrap(), default);

        let mut custom = default.clone();
        custom.threshold = None;
        custom.light_ink = true;
        custom.digit_area_max = 500;
        custom.model_path = Some(PathBuf::from("/tmp/digits.model"));
        custom.max_gap = 7.5;
        let text = write_config(&custom);
        assert!(text.contains("threshold = otsu"));
        assert!(text.contains("polarity = light"));
        assert_eq!(parse_config(&text).unwrap(), custom);
    }

    #[test]
    fn config_accepts_comments_and_rejects_junk() {
        let cfg = parse_config("# a comment\n\nmax_gap = 9 # trailing note\n").unwrap();
        assert_eq!(cfg.max_gap, 9.0);

        match parse_config("max_gap = 9\nnot a pair\n") {
            Err(PipelineError::Config { line: 2, .. }) => {}
            other => panic!("expected config error on line 2, got {other:?}"),
        }
        match parse_config("mystery = 1\n") {
            Err(PipelineError::Config { line: 1, message }) => {
                assert!(message.contains("mystery"))
            }
            other => panic!("expected unknown-key error, got {other:?}"),
        }
        match parse_config("threshold = cold\n") {
            Err(PipelineError::Config { line: 1, .. }) => {}
            other => panic!("expected bad-value error, got {other:?}"),
        }
    }

    fn small_grid() -> SyntheticConfig {
        SyntheticConfig {
            rows: 3,
            cols: 3,
            cell: 64,
            margin: 20,
            jitter: 2.5,
            stroke: 3,
            digit_scale: 3,
            seed: 42,
        }
    }

    #[test]
    fn synthetic_map_is_deterministic_and_seed_sensitive() {
        let cfg = small_grid();
        let (img_a, _) = generate_synthetic_map(&cfg);
        let (img_b, _) = generate_synthetic_map(&cfg);
        assert_eq!(img_a, img_b);

        let mut other = cfg.clone();
        other.seed = 43;
        let (img_c, _) = generate_synthetic_map(&other);
        assert_ne!(img_a, img_c);
    }

    #[test]
    fn synthetic_ground_truth_is_consistent() {
        let cfg = small_grid();
        let (img, truth) = generate_synthetic_map(&cfg);
        let (width, height) = cfg.dimensions();
        assert_eq!((img.width(), img.height()), (width, height));
        assert_eq!(truth.rings.len(), 9);
        assert_eq!(truth.numbers.len(), 9);
        assert_eq!(truth.anchors.len(), 9);
        assert_eq!(truth.numbers[0], "1");
        assert_eq!(truth.numbers[8], "9");
        for (ring, anchor) in truth.rings.iter().zip(&truth.anchors) {
            assert_eq!(ring.first().unwrap().key(), ring.last().unwrap().key());
            assert!(ring_signed_area(ring) > 0.0, "rings are counterclockwise");
            assert!(ring_contains(*anchor, ring), "anchor inside its plot");
        }
    }

    #[test]
    fn run_vectorizes_a_small_synthetic_map() {
        let (img, truth) = generate_synthetic_map(&small_grid());
        let out = run(&img, &PipelineConfig::default(), None).unwrap();

        assert_eq!(out.report.faces, 9, "one face per cell");
        assert!(out.report.euler_consistent);
        assert_eq!(out.records.len(), 9);
        assert_eq!(out.report.digit_components, 9);
        assert_eq!(out.report.digits_outside, 0);

        // Every produced ring parses back, and the geojson round-trips.
        assert_eq!(parse_plots(&out.geojson).unwrap().len(), 9);
        assert!(!out.ascii.is_empty());
        parse_ascii(&out.ascii).unwrap();

        // Match plots to ground-truth cells through the label anchors.
        let mut correct = 0;
        for (anchor, number) in truth.anchors.iter().zip(&truth.numbers) {
            let hit = out
                .records
                .iter()
                .find(|rec| ring_contains(*anchor, &rec.ring))
                .expect("anchor falls inside a produced plot");
            if &hit.plot_number == number {
                correct += 1;
            }
        }
        assert!(correct >= 8, "read {correct} of 9 plot numbers");

        // Stage list is complete and the report serializes.
        let stages: Vec<&str> = out.report.stage_ms.iter().map(|t| t.stage).collect();
        assert_eq!(
            stages,
            [
                "binarize",
                "bridge",
                "components",
                "separate",
                "digits",
                "thin",
                "trace",
                "snap",
                "smooth",
                "polygonize",
                "assign",
                "export"
            ]
        );
        serde_json::to_string(&out.report).unwrap();
    }

    #[test]
    fn blank_map_fails_in_the_separate_stage() {
        let blank = GrayRaster::filled(64, 64, 255);
        match run(&blank, &PipelineConfig::default(), None) {
            Err(PipelineError::Stage { stage: "separate", .. }) => {}
            other => panic!("expected separate-stage failure, got {other:?}"),
        }
    }

    #[test]
    fn dump_dir_collects_artifacts_even_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let (img, _) = generate_synthetic_map(&small_grid());
        run(&img, &PipelineConfig::default(), Some(dir.path())).unwrap();
        for name in [
            "01_binarized.pgm",
            "02_bridged.pgm",
            "03_digits.csv",
            "04_skeleton.pgm",
            "05_traced.txt",
            "06_snapped.txt",
            "07_smoothed.txt",
            "08_plots.geojson",
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }

        let fail_dir = tempfile::tempdir().unwrap();
        let blank = GrayRaster::filled(64, 64, 255);
        let err = run(&blank, &PipelineConfig::default(), Some(fail_dir.path()));
        assert!(err.is_err());
        // Everything before the failing stage is preserved.
        assert!(fail_dir.path().join("01_binarized.pgm").exists());
        assert!(fail_dir.path().join("02_bridged.pgm").exists());
        assert!(!fail_dir.path().join("08_plots.geojson").exists());
    }

    #[test]
    fn missing_model_path_is_trained_and_saved() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("digits.model");
        let cfg = PipelineConfig {
            model_path: Some(path.clone()),
            ..PipelineConfig::default()
        };

        let (img, _) = generate_synthetic_map(&small_grid());
        let first = run(&img, &cfg, None).unwrap();
        assert!(path.exists(), "baseline model saved to the configured path");
        let second = run(&img, &cfg, None).unwrap();
        assert_eq!(first.geojson, second.geojson);
        assert_eq!(first.ascii, second.ascii);
    }
}
