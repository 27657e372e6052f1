//! Raster primitives: grayscale and binary images, connected components,
//! and the ink/digit separation step that starts the vectorization pipeline.
//!
//! Pixel addressing is `(row, col)` with row 0 at the top of the image, the
//! usual scan order. Geometry produced further down the pipeline flips the
//! vertical axis; see [`crate::vecmodel`] for that convention.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster is empty")]
    EmptyRaster,
    #[error("no components to separate")]
    NoComponents,
}

/// 8-bit grayscale image in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl GrayRaster {
    /// Builds a raster from row-major samples. Panics if the sample count
    /// does not match `width * height`; that is a caller bug, not bad input.
    pub fn from_samples(width: u32, height: u32, samples: Vec<u8>) -> Self {
        assert_eq!(
            samples.len(),
            width as usize * height as usize,
            "sample count must be width * height"
        );
        GrayRaster {
            width,
            height,
            samples,
        }
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        GrayRaster {
            width,
            height,
            samples: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn get(&self, row: u32, col: u32) -> u8 {
        debug_assert!(row < self.height && col < self.width);
        self.samples[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: u8) {
        debug_assert!(row < self.height && col < self.width);
        self.samples[row as usize * self.width as usize + col as usize] = value;
    }
}

/// Which intensity range counts as ink when thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Ink is darker than the threshold (scanned dark ink on light paper).
    DarkInk,
    /// Ink is at or above the threshold (already-inverted imagery).
    LightInk,
}

/// Binary image; `true` marks foreground (ink).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryRaster {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryRaster {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    /// Builds a raster from row-major foreground flags. Panics on a size
    /// mismatch, same contract as [`GrayRaster::from_samples`].
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(
            bits.len(),
            width as usize * height as usize,
            "bit count must be width * height"
        );
        BinaryRaster {
            width,
            height,
            bits,
        }
    }

    /// Parses a compact text picture: one row per line, `#` for foreground,
    /// anything else for background. Handy for fixtures in tests.
    pub fn from_ascii_art(art: &str) -> Self {
        let rows: Vec<&str> = art
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len() as u32;
        let width = rows.iter().map(|r| r.chars().count()).max().unwrap_or(0) as u32;
        let mut out = BinaryRaster::new(width, height);
        for (r, line) in rows.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                if ch == '#' {
                    out.set(r as u32, c as u32, true);
                }
            }
        }
        out
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        debug_assert!(row < self.height && col < self.width);
        self.bits[row as usize * self.width as usize + col as usize]
    }

    /// Like [`get`](Self::get) but treats out-of-bounds as background, which
    /// is what neighborhood scans want at the image border.
    pub fn get_checked(&self, row: i64, col: i64) -> bool {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            false
        } else {
            self.bits[row as usize * self.width as usize + col as usize]
        }
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        debug_assert!(row < self.height && col < self.width);
        self.bits[row as usize * self.width as usize + col as usize] = value;
    }

    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Iterates foreground pixels in row-major order.
    pub fn foreground_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let width = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i as u32) / width, (i as u32) % width))
    }

    /// Renders foreground as black ink on white paper, the convention used
    /// for image files written by the tools.
    pub fn to_gray_ink_black(&self) -> GrayRaster {
        let samples = self.bits.iter().map(|&b| if b { 0 } else { 255 }).collect();
        GrayRaster::from_samples(self.width, self.height, samples)
    }

    /// Renders foreground as white on black, the convention used for digit
    /// patches fed to the classifier.
    pub fn to_gray_ink_white(&self) -> GrayRaster {
        let samples = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayRaster::from_samples(self.width, self.height, samples)
    }
}

/// Thresholds a grayscale image into ink/background.
///
/// With [`Polarity::DarkInk`], pixels strictly below `threshold` become
/// foreground; with [`Polarity::LightInk`], pixels at or above it do.
pub fn binarize(img: &GrayRaster, threshold: u8, polarity: Polarity) -> BinaryRaster {
    let bits = img
        .samples
        .iter()
        .map(|&v| match polarity {
            Polarity::DarkInk => v < threshold,
            Polarity::LightInk => v >= threshold,
        })
        .collect();
    BinaryRaster::from_bits(img.width, img.height, bits)
}

/// Picks a threshold by Otsu's method: the split of the 256-bin histogram
/// that maximizes between-class variance. Ties go to the lowest threshold.
/// Returns a value suitable for [`binarize`], i.e. foreground is `< t` for
/// dark ink, so the chosen split value is returned plus one.
pub fn otsu_threshold(img: &GrayRaster) -> u8 {
    let mut hist = [0u64; 256];
    for &v in &img.samples {
        hist[v as usize] += 1;
    }
    let total: u64 = img.samples.len() as u64;
    if total == 0 {
        return 128;
    }
    let sum_all: u64 = hist
        .iter()
        .enumerate()
        .map(|(v, &n)| v as u64 * n)
        .sum();

    let mut best_t = 0usize;
    let mut best_var = -1.0f64;
    let mut w0: u64 = 0;
    let mut sum0: u64 = 0;
    // Threshold t puts bins 0..=t in the dark class.
    for t in 0..256usize {
        w0 += hist[t];
        sum0 += t as u64 * hist[t];
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 as f64 / w0 as f64;
        let m1 = (sum_all - sum0) as f64 / w1 as f64;
        let var = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t;
        }
    }
    // Bins 0..=best_t are dark, so "< best_t + 1" selects them.
    (best_t + 1).min(255) as u8
}

/// Bounding box of a pixel set, inclusive on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub min_row: u32,
    pub min_col: u32,
    pub max_row: u32,
    pub max_col: u32,
}

impl Bounds {
    pub fn width(&self) -> u32 {
        self.max_col - self.min_col + 1
    }

    pub fn height(&self) -> u32 {
        self.max_row - self.min_row + 1
    }
}

/// One 8-connected blob of foreground pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: u32,
    /// Member pixels as `(row, col)`, sorted row-major.
    pub pixels: Vec<(u32, u32)>,
    pub bounds: Bounds,
    /// Pixel-center centroid `(x, y)` in raster coordinates: x grows right,
    /// y grows down, and a pixel at `(row, col)` is centered on
    /// `(col + 0.5, row + 0.5)`.
    pub centroid: (f64, f64),
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    fn from_pixels(id: u32, mut pixels: Vec<(u32, u32)>) -> Self {
        pixels.sort_unstable();
        let mut bounds = Bounds {
            min_row: u32::MAX,
            min_col: u32::MAX,
            max_row: 0,
            max_col: 0,
        };
        let mut sum_row: u64 = 0;
        let mut sum_col: u64 = 0;
        for &(r, c) in &pixels {
            bounds.min_row = bounds.min_row.min(r);
            bounds.min_col = bounds.min_col.min(c);
            bounds.max_row = bounds.max_row.max(r);
            bounds.max_col = bounds.max_col.max(c);
            sum_row += r as u64;
            sum_col += c as u64;
        }
        let n = pixels.len() as f64;
        let centroid = (sum_col as f64 / n + 0.5, sum_row as f64 / n + 0.5);
        Component {
            id,
            pixels,
            bounds,
            centroid,
        }
    }

    /// Rebuilds the component as a standalone binary raster the size of its
    /// bounding box.
    pub fn to_raster(&self) -> BinaryRaster {
        let mut out = BinaryRaster::new(self.bounds.width(), self.bounds.height());
        for &(r, c) in &self.pixels {
            out.set(r - self.bounds.min_row, c - self.bounds.min_col, true);
        }
        out
    }
}

/// Labels 8-connected foreground components.
///
/// Components come back ordered by the row-major position of their first
/// pixel, with `id` equal to the index in that order, so the result is fully
/// deterministic for a given raster.
pub fn connected_components(r: &BinaryRaster) -> Vec<Component> {
    let w = r.width as usize;
    let h = r.height as usize;
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..w * h {
        if !r.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(idx) = queue.pop_front() {
            let row = (idx / w) as u32;
            let col = (idx % w) as u32;
            pixels.push((row, col));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let nr = row as i64 + dr;
                    let nc = col as i64 + dc;
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let nidx = nr as usize * w + nc as usize;
                    if r.bits[nidx] && !seen[nidx] {
                        seen[nidx] = true;
                        queue.push_back(nidx);
                    }
                }
            }
        }
        out.push(Component::from_pixels(out.len() as u32, pixels));
    }
    out
}

/// Counts 4-connected background components; useful as a hole count when the
/// image border is background.
pub fn background_components(r: &BinaryRaster) -> usize {
    let w = r.width as usize;
    let h = r.height as usize;
    let mut seen = vec![false; w * h];
    let mut count = 0usize;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if r.bits[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let row = idx / w;
            let col = idx % w;
            let neighbors = [
                (row.wrapping_sub(1), col),
                (row + 1, col),
                (row, col.wrapping_sub(1)),
                (row, col + 1),
            ];
            for (nr, nc) in neighbors {
                if nr >= h || nc >= w {
                    continue;
                }
                let nidx = nr * w + nc;
                if !r.bits[nidx] && !seen[nidx] {
                    seen[nidx] = true;
                    queue.push_back(nidx);
                }
            }
        }
    }
    count
}

/// Result of splitting a map's components into line work and annotations.
#[derive(Debug, Clone)]
pub struct Separation {
    /// The plot-boundary line work (largest component).
    pub boundary: Component,
    /// Digit-sized components, ordered by id.
    pub digits: Vec<Component>,
    /// Everything else: specks below the noise floor and mid-sized blobs
    /// too big to be digits.
    pub noise: Vec<Component>,
}

impl Separation {
    /// Renders just the boundary ink onto a blank raster of the given size.
    pub fn boundary_raster(&self, width: u32, height: u32) -> BinaryRaster {
        let mut out = BinaryRaster::new(width, height);
        for &(r, c) in &self.boundary.pixels {
            out.set(r, c, true);
        }
        out
    }
}

/// Default cutoff for digit-sized components: twice the median area of the
/// non-boundary components. Zero when there are none.
pub fn default_digit_area_max(non_boundary_areas: &[usize]) -> usize {
    if non_boundary_areas.is_empty() {
        return 0;
    }
    let mut sorted = non_boundary_areas.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n % 2 == 1 {
        2 * sorted[n / 2]
    } else {
        // Twice the average of the middle pair, computed exactly.
        sorted[n / 2 - 1] + sorted[n / 2]
    }
}

/// Splits labeled components into boundary line work, digit annotations, and
/// noise.
///
/// The boundary is the component with the largest area; ties break toward
/// the smallest id. Of the rest, components with
/// `noise_area_min <= area <= digit_area_max` are digits, everything else is
/// noise.
pub fn separate_boundary_and_digits(
    comps: Vec<Component>,
    digit_area_max: usize,
    noise_area_min: usize,
) -> Result<Separation, RasterError> {
    if comps.is_empty() {
        return Err(RasterError::NoComponents);
    }
    let boundary_idx = comps
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.area().cmp(&b.area()).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("non-empty");
    let mut boundary = None;
    let mut digits = Vec::new();
    let mut noise = Vec::new();
    for (i, comp) in comps.into_iter().enumerate() {
        if i == boundary_idx {
            boundary = Some(comp);
        } else if comp.area() >= noise_area_min && comp.area() <= digit_area_max {
            digits.push(comp);
        } else {
            noise.push(comp);
        }
    }
    Ok(Separation {
        boundary: boundary.expect("boundary index points at a component"),
        digits,
        noise,
    })
}

/// Scales a component to a 28x28 patch, preserving aspect ratio and
/// centering, and reports the component centroid in raster coordinates.
///
/// The patch uses the classifier convention of white ink (255) on black (0).
/// Upscaling replicates pixels (nearest neighbor); downscaling ORs source
/// pixels into their target cell so thin strokes cannot vanish, which keeps
/// the patch nonempty whenever the component is.
pub fn extract_digit_patch(comp: &Component) -> (GrayRaster, (f64, f64)) {
    const SIDE: u32 = 28;
    let bw = comp.bounds.width();
    let bh = comp.bounds.height();
    // Fit the longer side to 28.
    let (tw, th) = if bh >= bw {
        let tw = ((SIDE as u64 * bw as u64 + bh as u64 / 2) / bh as u64).max(1) as u32;
        (tw, SIDE)
    } else {
        let th = ((SIDE as u64 * bh as u64 + bw as u64 / 2) / bw as u64).max(1) as u32;
        (SIDE, th)
    };
    let mask = comp.to_raster();
    let mut scaled = BinaryRaster::new(tw, th);
    if tw >= bw && th >= bh {
        // Upscale or identity: sample the source pixel under each target
        // pixel center, i.e. floor((t + 0.5) * src / dst).
        for tr in 0..th {
            let sr = ((2 * tr as u64 + 1) * bh as u64 / (2 * th as u64)) as u32;
            for tc in 0..tw {
                let sc = ((2 * tc as u64 + 1) * bw as u64 / (2 * tw as u64)) as u32;
                scaled.set(tr, tc, mask.get(sr, sc));
            }
        }
    } else {
        // Downscale: a target cell is on if any source pixel lands in it.
        for (r, c) in mask.foreground_pixels() {
            let tr = (r as u64 * th as u64 / bh as u64) as u32;
            let tc = (c as u64 * tw as u64 / bw as u64) as u32;
            scaled.set(tr.min(th - 1), tc.min(tw - 1), true);
        }
    }
    let ox = (SIDE - tw) / 2;
    let oy = (SIDE - th) / 2;
    let mut patch = GrayRaster::filled(SIDE, SIDE, 0);
    for (r, c) in scaled.foreground_pixels() {
        patch.set(r + oy, c + ox, 255);
    }
    (patch, comp.centroid)
}
