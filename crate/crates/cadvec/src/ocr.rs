//! Baseline digit recognition for the number patches cut out of a map.
//!
//! The recognizer is a nearest-centroid classifier over 28x28 grayscale
//! patches (white ink on black, the convention produced by
//! [`crate::raster::extract_digit_patch`]). Training averages the samples of
//! each class into a template; classification picks the template with the
//! smallest mean squared distance. Deliberately simple: the distinguishing
//! work happens upstream in separation and patch normalization, and a
//! centroid model is transparent to debug when it does not.

use std::fs;
use std::io;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::glyphs;
use crate::raster::GrayRaster;

/// Side length of a classifier patch.
pub const PATCH_SIZE: u32 = 28;
const PATCH_LEN: usize = (PATCH_SIZE * PATCH_SIZE) as usize;

/// Detections with confidence below this margin should be reviewed by hand.
pub const REVIEW_MARGIN: f64 = 0.05;

/// Softmin temperature for turning distance margins into confidences.
/// Mean-squared distances between distinct digit templates sit around
/// 0.05 to 0.15, so this scale maps a clear winner to a confidence well
/// above the review margin and a near-tie to nearly zero.
const SOFTMIN_TAU: f64 = 0.05;

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("training set is missing digit class(es) {missing:?}")]
    MissingClasses { missing: Vec<u8> },
    #[error("training sample {index} has label {label}; labels must be 0..=9")]
    BadLabel { index: usize, label: u8 },
    #[error("training sample {index} is {width}x{height}, expected {PATCH_SIZE}x{PATCH_SIZE}")]
    BadSampleSize { index: usize, width: u32, height: u32 },
    #[error("patch is {width}x{height}, expected {PATCH_SIZE}x{PATCH_SIZE}")]
    BadPatchSize { width: u32, height: u32 },
    #[error("model file has wrong magic bytes")]
    BadMagic,
    #[error("model file version {0} is not supported")]
    BadVersion(u32),
    #[error("model file is truncated or has trailing data")]
    BadLength,
    #[error("digit csv: {0}")]
    BadCsv(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// One recognized digit, positioned at the centroid of the ink component it
/// was cut from (pixel coordinates, x right, y down).
#[derive(Debug, Clone, PartialEq)]
pub struct DigitDetection {
    pub label: u8,
    pub confidence: f64,
    pub position: (f64, f64),
}

impl DigitDetection {
    pub fn needs_review(&self) -> bool {
        self.confidence < REVIEW_MARGIN
    }
}

/// Nearest-centroid model: one mean-intensity template per digit class,
/// values in [0, 1].
#[derive(Debug, Clone)]
pub struct RecognizerModel {
    templates: [[f32; PATCH_LEN]; 10],
    /// How many samples went into each template. Advisory metadata only;
    /// the on-disk format does not carry it, so loaded models report zeros.
    sample_counts: [u32; 10],
}

impl RecognizerModel {
    pub fn template(&self, digit: u8) -> &[f32] {
        &self.templates[usize::from(digit)]
    }

    pub fn sample_counts(&self) -> &[u32; 10] {
        &self.sample_counts
    }
}

/// Averages the samples of each class into its template. Every class must
/// be represented; the error lists all absent labels at once. Pixel sums are
/// accumulated in integers, so sample order cannot change the result and
/// duplicating the whole set is a no-op.
pub fn train_baseline(samples: &[(u8, GrayRaster)]) -> Result<RecognizerModel, OcrError> {
    let mut sums = vec![[0u64; PATCH_LEN]; 10];
    let mut counts = [0u64; 10];
    for (index, (label, patch)) in samples.iter().enumerate() {
        if *label > 9 {
            return Err(OcrError::BadLabel {
                index,
                label: *label,
            });
        }
        if patch.width() != PATCH_SIZE || patch.height() != PATCH_SIZE {
            return Err(OcrError::BadSampleSize {
                index,
                width: patch.width(),
                height: patch.height(),
            });
        }
        let class = usize::from(*label);
        counts[class] += 1;
        for (acc, &v) in sums[class].iter_mut().zip(patch.samples()) {
            *acc += u64::from(v);
        }
    }

    let missing: Vec<u8> = (0u8..10).filter(|&c| counts[usize::from(c)] == 0).collect();
    if !missing.is_empty() {
        return Err(OcrError::MissingClasses { missing });
    }

    let mut templates = [[0f32; PATCH_LEN]; 10];
    for class in 0..10 {
        let denom = counts[class] as f64 * 255.0;
        for (t, &s) in templates[class].iter_mut().zip(&sums[class]) {
            *t = (s as f64 / denom) as f32;
        }
    }
    let mut sample_counts = [0u32; 10];
    for (dst, &n) in sample_counts.iter_mut().zip(&counts) {
        *dst = n as u32;
    }
    Ok(RecognizerModel {
        templates,
        sample_counts,
    })
}

/// Mean squared distance between a patch (scaled to [0, 1]) and a template.
fn patch_distance(patch: &GrayRaster, template: &[f32; PATCH_LEN]) -> f64 {
    let mut acc = 0.0f64;
    for (&v, &t) in patch.samples().iter().zip(template) {
        let d = f64::from(v) / 255.0 - f64::from(t);
        acc += d * d;
    }
    acc / PATCH_LEN as f64
}

/// Classifies a 28x28 patch. Returns the winning label and a confidence in
/// [0, 1]: the gap between the top two softmin weights of the class
/// distances. Distance ties resolve toward the smaller digit.
pub fn classify(model: &RecognizerModel, patch: &GrayRaster) -> Result<(u8, f64), OcrError> {
    if patch.width() != PATCH_SIZE || patch.height() != PATCH_SIZE {
        return Err(OcrError::BadPatchSize {
            width: patch.width(),
            height: patch.height(),
        });
    }
    let mut distances = [0.0f64; 10];
    for (class, template) in model.templates.iter().enumerate() {
        distances[class] = patch_distance(patch, template);
    }
    let mut best = 0usize;
    for class in 1..10 {
        if distances[class] < distances[best] {
            best = class;
        }
    }

    let d_min = distances[best];
    let mut weights = [0.0f64; 10];
    let mut total = 0.0f64;
    for class in 0..10 {
        let w = (-(distances[class] - d_min) / SOFTMIN_TAU).exp();
        weights[class] = w;
        total += w;
    }
    let mut runner_up = 0.0f64;
    for (class, &w) in weights.iter().enumerate() {
        if class != best && w > runner_up {
            runner_up = w;
        }
    }
    let confidence = (weights[best] - runner_up) / total;
    Ok((best as u8, confidence))
}

/// Confusion counts from running a model over labeled samples.
/// `matrix[truth][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub matrix: [[u32; 10]; 10],
    pub total: u32,
    pub correct: u32,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        f64::from(self.correct) / f64::from(self.total)
    }

    /// Plain-text table for terminal display, truth in rows.
    pub fn render_table(&self) -> String {
        let mut out = String::from("truth\\pred");
        for c in 0..10 {
            out.push_str(&format!("{c:>6}"));
        }
        out.push('\n');
        for (truth, row) in self.matrix.iter().enumerate() {
            out.push_str(&format!("{truth:>10}"));
            for &n in row {
                out.push_str(&format!("{n:>6}"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "accuracy {:.4} ({} / {})\n",
            self.accuracy(),
            self.correct,
            self.total
        ));
        out
    }
}

pub fn evaluate(model: &RecognizerModel, samples: &[(u8, GrayRaster)]) -> Result<EvalReport, OcrError> {
    let mut matrix = [[0u32; 10]; 10];
    let mut correct = 0u32;
    for (index, (label, patch)) in samples.iter().enumerate() {
        if *label > 9 {
            return Err(OcrError::BadLabel {
                index,
                label: *label,
            });
        }
        let (pred, _) = classify(model, patch)?;
        matrix[usize::from(*label)][usize::from(pred)] += 1;
        if pred == *label {
            correct += 1;
        }
    }
    Ok(EvalReport {
        matrix,
        total: samples.len() as u32,
        correct,
    })
}

const MODEL_MAGIC: [u8; 8] = *b"CADVOCRM";
const MODEL_VERSION: u32 = 1;

/// Serializes a model: magic, version (u32 LE), then the ten templates as
/// 784 little-endian f32 each.
pub fn model_to_bytes(model: &RecognizerModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 + 10 * PATCH_LEN * 4);
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for template in &model.templates {
        for &v in template.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`model_to_bytes`]. Sample counts are not part of the format
/// and come back as zeros.
pub fn model_from_bytes(bytes: &[u8]) -> Result<RecognizerModel, OcrError> {
    if bytes.len() < 12 {
        return Err(OcrError::BadLength);
    }
    if bytes[..8] != MODEL_MAGIC {
        return Err(OcrError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(OcrError::BadVersion(version));
    }
    let body = &bytes[12..];
    if body.len() != 10 * PATCH_LEN * 4 {
        return Err(OcrError::BadLength);
    }
    let mut templates = [[0f32; PATCH_LEN]; 10];
    for (class, template) in templates.iter_mut().enumerate() {
        let base = class * PATCH_LEN * 4;
        for (i, v) in template.iter_mut().enumerate() {
            let at = base + i * 4;
            *v = f32::from_le_bytes(body[at..at + 4].try_into().unwrap());
        }
    }
    Ok(RecognizerModel {
        templates,
        sample_counts: [0; 10],
    })
}

pub fn save_model(model: &RecognizerModel, path: &Path) -> Result<(), OcrError> {
    fs::write(path, model_to_bytes(model)).map_err(|source| OcrError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<RecognizerModel, OcrError> {
    let bytes = fs::read(path).map_err(|source| OcrError::Io {
        path: path.display().to_string(),
        source,
    })?;
    model_from_bytes(&bytes)
}

/// Generates a labeled jittered sample set from the built-in digit face,
/// `per_class` patches for each digit, reproducible per seed. Used to train
/// the default model and to benchmark recognition.
pub fn synthetic_corpus(per_class: usize, seed: u64) -> Vec<(u8, GrayRaster)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * 10);
    for digit in 0u8..10 {
        for _ in 0..per_class {
            out.push((digit, glyphs::render_sample(digit, &mut rng)));
        }
    }
    out
}

const CSV_HEADER: &str = "label,confidence,x,y";

/// Writes detections as csv with a fixed `label,confidence,x,y` header.
pub fn write_digits_csv(detections: &[DigitDetection]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for d in detections {
        out.push_str(&format!(
            "{},{},{},{}\n",
            d.label, d.confidence, d.position.0, d.position.1
        ));
    }
    out
}

/// Parses the csv produced by [`write_digits_csv`]. The header row is
/// required; rows must have exactly four fields.
pub fn read_digits_csv(text: &str) -> Result<Vec<DigitDetection>, OcrError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(OcrError::BadCsv(format!(
                "expected header '{CSV_HEADER}', found '{header}'"
            )))
        }
        None => return Err(OcrError::BadCsv("empty file".into())),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(OcrError::BadCsv(format!(
                "line {}: expected 4 fields, found {}",
                idx + 1,
                fields.len()
            )));
        }
        let label: u8 = fields[0]
            .trim()
            .parse()
            .ok()
            .filter(|l| *l <= 9)
            .ok_or_else(|| OcrError::BadCsv(format!("line {}: bad label '{}'", idx + 1, fields[0])))?;
        let parse_f = |s: &str, what: &str| -> Result<f64, OcrError> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| OcrError::BadCsv(format!("line {}: bad {what} '{s}'", idx + 1)))
        };
        let confidence = parse_f(fields[1], "confidence")?;
        let x = parse_f(fields[2], "x")?;
        let y = parse_f(fields[3], "y")?;
        out.push(DigitDetection {
            label,
            confidence,
            position: (x, y),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;

    /// A clean, noise-free 28x28 patch of one digit at scale 4, top-left.
    fn clean_patch(digit: u8) -> GrayRaster {
        let mut patch = GrayRaster::filled(PATCH_SIZE, PATCH_SIZE, 0);
        glyphs::stamp_digit(&mut patch, digit, 0, 4, 4, 255);
        patch
    }

    fn clean_training_set() -> Vec<(u8, GrayRaster)> {
        (0u8..10).map(|d| (d, clean_patch(d))).collect()
    }

    #[test]
    fn single_sample_training_copies_the_samples() {
        let model = train_baseline(&clean_training_set()).unwrap();
        for digit in 0u8..10 {
            let patch = clean_patch(digit);
            for (t, &v) in model.template(digit).iter().zip(patch.samples()) {
                let expected = f64::from(v) / 255.0;
                assert_eq!(*t, expected as f32);
            }
        }
        assert_eq!(model.sample_counts(), &[1; 10]);
    }

    #[test]
    fn training_ignores_sample_order_and_duplication() {
        let base = synthetic_corpus(12, 77);
        let reference = train_baseline(&base).unwrap();

        let mut shuffled = base.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let from_shuffled = train_baseline(&shuffled).unwrap();

        let mut doubled = base.clone();
        doubled.extend(base.iter().cloned());
        let from_doubled = train_baseline(&doubled).unwrap();

        for digit in 0u8..10 {
            assert_eq!(reference.template(digit), from_shuffled.template(digit));
            assert_eq!(reference.template(digit), from_doubled.template(digit));
        }
    }

    #[test]
    fn missing_classes_are_all_reported() {
        let samples: Vec<(u8, GrayRaster)> = clean_training_set()
            .into_iter()
            .filter(|(d, _)| *d != 3 && *d != 7)
            .collect();
        match train_baseline(&samples) {
            Err(OcrError::MissingClasses { missing }) => assert_eq!(missing, vec![3, 7]),
            other => panic!("expected MissingClasses, got {other:?}"),
        }
    }

    #[test]
    fn bad_samples_are_rejected() {
        let mut samples = clean_training_set();
        samples.push((11, clean_patch(0)));
        assert!(matches!(
            train_baseline(&samples),
            Err(OcrError::BadLabel { index: 10, label: 11 })
        ));

        let mut samples = clean_training_set();
        samples[4].1 = GrayRaster::filled(27, 28, 0);
        assert!(matches!(
            train_baseline(&samples),
            Err(OcrError::BadSampleSize { index: 4, .. })
        ));
    }

    #[test]
    fn template_patch_classifies_as_its_own_class() {
        let model = train_baseline(&clean_training_set()).unwrap();
        for digit in 0u8..10 {
            let (label, confidence) = classify(&model, &clean_patch(digit)).unwrap();
            assert_eq!(label, digit);
            assert!(
                confidence > REVIEW_MARGIN,
                "digit {digit} confidence {confidence}"
            );
        }
    }

    #[test]
    fn distance_ties_pick_the_smaller_digit() {
        // All templates identical: every distance ties, so the answer must
        // be digit 0 with zero margin.
        let model = RecognizerModel {
            templates: [[0.5; PATCH_LEN]; 10],
            sample_counts: [1; 10],
        };
        let patch = GrayRaster::filled(PATCH_SIZE, PATCH_SIZE, 128);
        let (label, confidence) = classify(&model, &patch).unwrap();
        assert_eq!(label, 0);
        assert_eq!(confidence, 0.0);
        let blank = GrayRaster::filled(PATCH_SIZE, PATCH_SIZE, 0);
        assert_eq!(classify(&model, &blank).unwrap().0, 0);
    }

    #[test]
    fn blank_patch_yields_the_nearest_template_deterministically() {
        let model = train_baseline(&clean_training_set()).unwrap();
        let blank = GrayRaster::filled(PATCH_SIZE, PATCH_SIZE, 0);
        let (label, _) = classify(&model, &blank).unwrap();
        // Independent argmin over template norms; ties toward smaller digit.
        let mut expected = 0u8;
        let mut best = f64::INFINITY;
        for digit in 0u8..10 {
            let norm: f64 = model
                .template(digit)
                .iter()
                .map(|&t| f64::from(t) * f64::from(t))
                .sum::<f64>()
                / PATCH_LEN as f64;
            if norm < best {
                best = norm;
                expected = digit;
            }
        }
        assert_eq!(label, expected);
        // Run twice to pin determinism.
        assert_eq!(classify(&model, &blank).unwrap().0, label);
    }

    #[test]
    fn wrong_patch_size_is_an_error() {
        let model = train_baseline(&clean_training_set()).unwrap();
        let patch = GrayRaster::filled(27, 29, 0);
        assert!(matches!(
            classify(&model, &patch),
            Err(OcrError::BadPatchSize {
                width: 27,
                height: 29
            })
        ));
    }

    #[test]
    fn model_bytes_round_trip_exactly() {
        let model = train_baseline(&synthetic_corpus(5, 9)).unwrap();
        let bytes = model_to_bytes(&model);
        assert_eq!(bytes.len(), 8 + 4 + 10 * PATCH_LEN * 4);
        let back = model_from_bytes(&bytes).unwrap();
        for digit in 0u8..10 {
            assert_eq!(model.template(digit), back.template(digit));
        }
        // Counts are advisory and not persisted.
        assert_eq!(back.sample_counts(), &[0; 10]);
    }

    #[test]
    fn model_decoding_rejects_corrupt_input() {
        let model = train_baseline(&clean_training_set()).unwrap();
        let good = model_to_bytes(&model);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(model_from_bytes(&bad_magic), Err(OcrError::BadMagic)));

        let mut bad_version = good.clone();
        bad_version[8] = 9;
        assert!(matches!(
            model_from_bytes(&bad_version),
            Err(OcrError::BadVersion(9))
        ));

        assert!(matches!(
            model_from_bytes(&good[..good.len() - 1]),
            Err(OcrError::BadLength)
        ));
        assert!(matches!(model_from_bytes(&good[..5]), Err(OcrError::BadLength)));
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("digits.model");
        let model = train_baseline(&clean_training_set()).unwrap();
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        for digit in 0u8..10 {
            assert_eq!(model.template(digit), back.template(digit));
        }
        assert!(matches!(
            load_model(&dir.path().join("missing.model")),
            Err(OcrError::Io { .. })
        ));
    }

    #[test]
    fn synthetic_benchmark_reaches_95_percent() {
        let model = train_baseline(&synthetic_corpus(40, 101)).unwrap();
        let held_out = synthetic_corpus(60, 202);
        let report = evaluate(&model, &held_out).unwrap();
        assert_eq!(report.total, 600);
        assert!(
            report.accuracy() >= 0.95,
            "accuracy {:.4}\n{}",
            report.accuracy(),
            report.render_table()
        );
        // The diagonal dominates every row.
        for truth in 0..10 {
            let diag = report.matrix[truth][truth];
            for pred in 0..10 {
                if pred != truth {
                    assert!(report.matrix[truth][pred] < diag);
                }
            }
        }
    }

    #[test]
    fn digits_csv_round_trips() {
        let dets = vec![
            DigitDetection {
                label: 5,
                confidence: 0.875,
                position: (12.5, 40.25),
            },
            DigitDetection {
                label: 0,
                confidence: 0.03125,
                position: (-1.5, 7.0),
            },
        ];
        let text = write_digits_csv(&dets);
        assert!(text.starts_with("label,confidence,x,y\n"));
        let back = read_digits_csv(&text).unwrap();
        assert_eq!(back, dets);
        assert!(back[1].needs_review() && !back[0].needs_review());
    }

    #[test]
    fn digits_csv_rejects_malformed_input() {
        assert!(matches!(read_digits_csv(""), Err(OcrError::BadCsv(_))));
        assert!(matches!(
            read_digits_csv("label,conf,x,y\n1,0.5,2,3\n"),
            Err(OcrError::BadCsv(_))
        ));
        assert!(matches!(
            read_digits_csv("label,confidence,x,y\n1,0.5,2\n"),
            Err(OcrError::BadCsv(_))
        ));
        assert!(matches!(
            read_digits_csv("label,confidence,x,y\n12,0.5,2,3\n"),
            Err(OcrError::BadCsv(_))
        ));
        assert!(matches!(
            read_digits_csv("label,confidence,x,y\n1,NaN,2,3\n"),
            Err(OcrError::BadCsv(_))
        ));
    }
}
