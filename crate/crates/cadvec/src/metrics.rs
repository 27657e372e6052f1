//! Quality metrics comparing rasters and vector maps: intersection over
//! union, scaled mean squared error, Hausdorff and discrete Frechet
//! distances, plus a tiled evaluation driver that scores a vectorization
//! against a reference raster patch by patch.

use serde::Serialize;
use thiserror::Error;

use crate::raster::BinaryRaster;
use crate::skeleton::thin;
use crate::vecmodel::{map_to_pixel, trace, Point, VectorMap};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
}

fn check_dims(a: &BinaryRaster, b: &BinaryRaster) -> Result<(), MetricsError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    Ok(())
}

/// Intersection over union of two foreground masks. Two empty masks are
/// identical, so the result is 1.
pub fn iou(a: &BinaryRaster, b: &BinaryRaster) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let mut inter = 0u64;
    let mut union = 0u64;
    for row in 0..a.height() {
        for col in 0..a.width() {
            let (pa, pb) = (a.get(row, col), b.get(row, col));
            inter += u64::from(pa && pb);
            union += u64::from(pa || pb);
        }
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Mean squared error between two masks, scaled by 100: the percentage of
/// pixels on which the masks disagree.
pub fn mse(a: &BinaryRaster, b: &BinaryRaster) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    if a.width() == 0 || a.height() == 0 {
        return Ok(0.0);
    }
    let mut diff = 0u64;
    for row in 0..a.height() {
        for col in 0..a.width() {
            diff += u64::from(a.get(row, col) != b.get(row, col));
        }
    }
    Ok(diff as f64 / (a.width() as f64 * a.height() as f64) * 100.0)
}

/// Directed Hausdorff: the largest distance from a point of `from` to its
/// nearest point of `to`. The inner scan stops early once a point is known
/// not to raise the running maximum; the result is still exact.
fn directed_hausdorff(from: &[Point], to: &[Point], running_max: f64) -> f64 {
    let mut worst = running_max;
    for &p in from {
        let mut best = f64::INFINITY;
        for &q in to {
            let d = p.distance(q);
            if d < best {
                best = d;
                if best <= worst {
                    break;
                }
            }
        }
        if best > worst {
            worst = best;
        }
    }
    worst
}

/// Symmetric Hausdorff distance between two point sets. `None` when exactly
/// one set is empty (the distance is undefined); two empty sets coincide,
/// giving 0.
pub fn hausdorff(a: &[Point], b: &[Point]) -> Option<f64> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Some(0.0),
        (true, false) | (false, true) => return None,
        (false, false) => {}
    }
    let d = directed_hausdorff(a, b, 0.0);
    Some(directed_hausdorff(b, a, d))
}

/// Discrete Frechet distance between two polylines: the smallest leash
/// length over all monotone couplings of the vertex sequences. `None` when
/// either curve is empty.
pub fn frechet(a: &[Point], b: &[Point]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for (i, &pa) in a.iter().enumerate() {
        for (j, &pb) in b.iter().enumerate() {
            let leg = pa.distance(pb);
            let reach = if i == 0 && j == 0 {
                leg
            } else if i == 0 {
                cur[j - 1].max(leg)
            } else if j == 0 {
                prev[j].max(leg)
            } else {
                prev[j].min(cur[j - 1]).min(prev[j - 1]).max(leg)
            };
            cur[j] = reach;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Some(prev[m - 1])
}

/// Draws a vector map into a raster. Every polyline segment is traced with
/// Bresenham steps between the pixel positions of its endpoints, both
/// endpoints included, and each step is stamped with a square brush of side
/// `stroke` (centered for odd strokes, biased up-left for even ones). A
/// straight stroke-1 segment of length n therefore covers n + 1 pixels.
pub fn rasterize(v: &VectorMap, width: u32, height: u32, stroke: u32) -> BinaryRaster {
    let mut out = BinaryRaster::new(width, height);
    let lo = -((stroke as i64) / 2);
    let hi = lo + stroke as i64 - 1;
    let mut stamp = |row: i64, col: i64| {
        for dr in lo..=hi {
            for dc in lo..=hi {
                let (r, c) = (row + dr, col + dc);
                if r >= 0 && c >= 0 && (r as u32) < height && (c as u32) < width {
                    out.set(r as u32, c as u32, true);
                }
            }
        }
    };
    for cat in v.iter().filter(|c| !c.removed) {
        for w in cat.points.windows(2) {
            let (r0, c0) = map_to_pixel(w[0], height);
            let (r1, c1) = map_to_pixel(w[1], height);
            let (dr, dc) = ((r1 - r0).abs(), (c1 - c0).abs());
            let sr = if r0 < r1 { 1 } else { -1 };
            let sc = if c0 < c1 { 1 } else { -1 };
            let (mut r, mut c) = (r0, c0);
            let mut err = dc - dr;
            loop {
                stamp(r, c);
                if r == r1 && c == c1 {
                    break;
                }
                let e2 = 2 * err;
                if e2 > -dr {
                    err -= dr;
                    c += sc;
                }
                if e2 < dc {
                    err += dc;
                    r += sr;
                }
            }
        }
    }
    out
}

/// Summary statistics of one metric over the evaluated tiles. The median
/// and percentile use the nearest-rank rule on the sorted values.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
}

fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = |p: f64| -> f64 {
        let idx = (p * sorted.len() as f64).ceil() as usize;
        sorted[idx.max(1) - 1]
    };
    Some(Aggregate {
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        median: rank(0.50),
        p90: rank(0.90),
    })
}

/// Scores of one evaluated tile. Hausdorff is absent when exactly one side
/// of the tile is blank; Frechet is absent when either side has no traced
/// centerline.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TileMetrics {
    pub row0: u32,
    pub col0: u32,
    pub iou: f64,
    pub mse: f64,
    pub hausdorff: Option<f64>,
    pub frechet: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PatchReport {
    pub patch_size: u32,
    pub stroke: u32,
    pub tiles: Vec<TileMetrics>,
    /// Tiles blank on both sides, excluded entirely.
    pub skipped_empty: usize,
    /// Evaluated tiles where Hausdorff was undefined (one side blank).
    pub hausdorff_skipped: usize,
    /// Evaluated tiles where no centerline pair existed.
    pub frechet_skipped: usize,
    pub iou_stats: Option<Aggregate>,
    pub mse_stats: Option<Aggregate>,
    pub hausdorff_stats: Option<Aggregate>,
    pub frechet_stats: Option<Aggregate>,
}

fn crop_padded(src: &BinaryRaster, row0: u32, col0: u32, size: u32) -> BinaryRaster {
    let mut tile = BinaryRaster::new(size, size);
    for r in 0..size.min(src.height().saturating_sub(row0)) {
        for c in 0..size.min(src.width().saturating_sub(col0)) {
            if src.get(row0 + r, col0 + c) {
                tile.set(r, c, true);
            }
        }
    }
    tile
}

fn foreground_points(r: &BinaryRaster) -> Vec<Point> {
    r.foreground_pixels()
        .map(|(row, col)| Point::new(f64::from(col), f64::from(row)))
        .collect()
}

/// Longest centerline of a tile: thin, trace, take the category with the
/// greatest arc length (smallest id on ties).
fn longest_centerline(tile: &BinaryRaster) -> Option<Vec<Point>> {
    let traced = trace(&thin(tile));
    traced
        .iter()
        .filter(|c| !c.removed)
        .max_by(|a, b| {
            a.arc_length()
                .total_cmp(&b.arc_length())
                .then(b.id.cmp(&a.id))
        })
        .map(|c| c.points.clone())
}

/// Tiles the reference raster and a rasterization of the candidate map into
/// square patches (zero-padded at the right and bottom edges) and scores
/// each pair. Tiles blank on both sides are skipped and counted.
pub fn patch_evaluate(
    reference: &BinaryRaster,
    candidate: &VectorMap,
    patch_size: u32,
    stroke: u32,
) -> PatchReport {
    assert!(patch_size > 0, "patch size must be positive");
    let rendered = rasterize(candidate, reference.width(), reference.height(), stroke);
    let mut tiles = Vec::new();
    let mut skipped_empty = 0usize;
    let mut hausdorff_skipped = 0usize;
    let mut frechet_skipped = 0usize;

    let mut row0 = 0u32;
    while row0 < reference.height() {
        let mut col0 = 0u32;
        while col0 < reference.width() {
            let ref_tile = crop_padded(reference, row0, col0, patch_size);
            let cand_tile = crop_padded(&rendered, row0, col0, patch_size);
            let ref_fg = foreground_points(&ref_tile);
            let cand_fg = foreground_points(&cand_tile);
            if ref_fg.is_empty() && cand_fg.is_empty() {
                skipped_empty += 1;
                col0 += patch_size;
                continue;
            }
            let hd = hausdorff(&ref_fg, &cand_fg);
            if hd.is_none() {
                hausdorff_skipped += 1;
            }
            let fr = match (longest_centerline(&ref_tile), longest_centerline(&cand_tile)) {
                (Some(a), Some(b)) => frechet(&a, &b),
                _ => None,
            };
            if fr.is_none() {
                frechet_skipped += 1;
            }
            tiles.push(TileMetrics {
                row0,
                col0,
                iou: iou(&ref_tile, &cand_tile).expect("tiles share dimensions"),
                mse: mse(&ref_tile, &cand_tile).expect("tiles share dimensions"),
                hausdorff: hd,
                frechet: fr,
            });
            col0 += patch_size;
        }
        row0 += patch_size;
    }

    let collect = |f: fn(&TileMetrics) -> Option<f64>| -> Vec<f64> {
        tiles.iter().filter_map(f).collect()
    };
    let iou_values = collect(|t| Some(t.iou));
    let mse_values = collect(|t| Some(t.mse));
    let hd_values = collect(|t| t.hausdorff);
    let fr_values = collect(|t| t.frechet);

    PatchReport {
        patch_size,
        stroke,
        skipped_empty,
        hausdorff_skipped,
        frechet_skipped,
        iou_stats: aggregate(&iou_values),
        mse_stats: aggregate(&mse_values),
        hausdorff_stats: aggregate(&hd_values),
        frechet_stats: aggregate(&fr_values),
        tiles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmodel::Category;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raster_from_coords(width: u32, height: u32, coords: &[(u32, u32)]) -> BinaryRaster {
        let mut r = BinaryRaster::new(width, height);
        for &(row, col) in coords {
            r.set(row, col, true);
        }
        r
    }

    #[test]
    fn iou_anchor_values() {
        let a = raster_from_coords(4, 4, &[(0, 0), (1, 1)]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);

        let b = raster_from_coords(4, 4, &[(2, 2)]);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);

        let empty = BinaryRaster::new(4, 4);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);

        // A 10x10 square against itself shifted by half overlaps on 50 of
        // 150 union pixels.
        let mut sq = BinaryRaster::new(20, 20);
        let mut shifted = BinaryRaster::new(20, 20);
        for r in 0..10 {
            for c in 0..10 {
                sq.set(r, c, true);
                shifted.set(r, c + 5, true);
            }
        }
        let got = iou(&sq, &shifted).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn mse_is_disagreement_percentage() {
        let a = raster_from_coords(10, 10, &[(0, 0), (5, 5)]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let empty = BinaryRaster::new(10, 10);
        assert_eq!(mse(&a, &empty).unwrap(), 2.0);
        let mut full = BinaryRaster::new(10, 10);
        for r in 0..10 {
            for c in 0..10 {
                full.set(r, c, true);
            }
        }
        assert_eq!(mse(&full, &empty).unwrap(), 100.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = BinaryRaster::new(4, 4);
        let b = BinaryRaster::new(4, 5);
        assert!(matches!(iou(&a, &b), Err(MetricsError::DimensionMismatch(..))));
        assert!(matches!(mse(&a, &b), Err(MetricsError::DimensionMismatch(..))));
    }

    #[test]
    fn iou_and_mse_match_set_oracles_on_random_rasters() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let (w, h) = (32u32, 32u32);
            let mut a = BinaryRaster::new(w, h);
            let mut b = BinaryRaster::new(w, h);
            let mut set_a = std::collections::HashSet::new();
            let mut set_b = std::collections::HashSet::new();
            for r in 0..h {
                for c in 0..w {
                    if rng.gen_bool(0.3) {
                        a.set(r, c, true);
                        set_a.insert((r, c));
                    }
                    if rng.gen_bool(0.3) {
                        b.set(r, c, true);
                        set_b.insert((r, c));
                    }
                }
            }
            let inter = set_a.intersection(&set_b).count() as f64;
            let union = set_a.union(&set_b).count() as f64;
            let expect_iou = if union == 0.0 { 1.0 } else { inter / union };
            assert_eq!(iou(&a, &b).unwrap(), expect_iou);
            let sym_diff = union - inter;
            assert_eq!(mse(&a, &b).unwrap(), sym_diff / 1024.0 * 100.0);
        }
    }

    fn pts(coords: &[(f64, f64)]) -> Vec<Point> {
        coords.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn hausdorff_anchor_and_edge_cases() {
        assert_eq!(
            hausdorff(&pts(&[(0.0, 0.0)]), &pts(&[(3.0, 4.0)])),
            Some(5.0)
        );
        assert_eq!(hausdorff(&[], &[]), Some(0.0));
        assert_eq!(hausdorff(&pts(&[(1.0, 1.0)]), &[]), None);
        assert_eq!(hausdorff(&[], &pts(&[(1.0, 1.0)])), None);
        let a = pts(&[(0.0, 0.0), (10.0, 0.0)]);
        assert_eq!(hausdorff(&a, &a), Some(0.0));
    }

    #[test]
    fn hausdorff_matches_plain_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..60 {
            let n = rng.gen_range(1..=60);
            let m = rng.gen_range(1..=60);
            let a: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)))
                .collect();
            let b: Vec<Point> = (0..m)
                .map(|_| Point::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)))
                .collect();
            let naive = {
                let dir = |x: &[Point], y: &[Point]| -> f64 {
                    x.iter()
                        .map(|p| {
                            y.iter()
                                .map(|q| p.distance(*q))
                                .fold(f64::INFINITY, f64::min)
                        })
                        .fold(0.0, f64::max)
                };
                dir(&a, &b).max(dir(&b, &a))
            };
            assert_eq!(hausdorff(&a, &b), Some(naive));
            assert_eq!(hausdorff(&a, &b), hausdorff(&b, &a));
        }
    }

    #[test]
    fn frechet_anchor_values() {
        // Two parallel straight lines at distance 2.
        let a = pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let b = pts(&[(0.0, 2.0), (1.0, 2.0), (2.0, 2.0), (3.0, 2.0)]);
        assert_eq!(frechet(&a, &b), Some(2.0));
        assert_eq!(frechet(&a, &a), Some(0.0));
        assert_eq!(frechet(&a, &[]), None);
        assert_eq!(frechet(&[], &b), None);
    }

    /// Minimax over every monotone coupling, explored exhaustively.
    fn frechet_exhaustive(a: &[Point], b: &[Point]) -> f64 {
        fn go(a: &[Point], b: &[Point], i: usize, j: usize) -> f64 {
            let leg = a[i].distance(b[j]);
            if i == a.len() - 1 && j == b.len() - 1 {
                return leg;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() {
                best = best.min(go(a, b, i + 1, j));
            }
            if j + 1 < b.len() {
                best = best.min(go(a, b, i, j + 1));
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(go(a, b, i + 1, j + 1));
            }
            leg.max(best)
        }
        go(a, b, 0, 0)
    }

    #[test]
    fn frechet_matches_exhaustive_coupling_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..60 {
            let n = rng.gen_range(1..=8);
            let m = rng.gen_range(1..=8);
            let a: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)))
                .collect();
            let b: Vec<Point> = (0..m)
                .map(|_| Point::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)))
                .collect();
            assert_eq!(frechet(&a, &b), Some(frechet_exhaustive(&a, &b)));
            assert_eq!(frechet(&a, &b), frechet(&b, &a));
        }
    }

    #[test]
    fn frechet_dominates_hausdorff_and_translation_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..40 {
            // Coordinates on a quarter-pixel grid so translation by a
            // dyadic offset is exact in floating point.
            let grid = |rng: &mut ChaCha8Rng| rng.gen_range(-80i32..80) as f64 * 0.25;
            let n = rng.gen_range(2..=12);
            let m = rng.gen_range(2..=12);
            let a: Vec<Point> = (0..n).map(|_| Point::new(grid(&mut rng), grid(&mut rng))).collect();
            let b: Vec<Point> = (0..m).map(|_| Point::new(grid(&mut rng), grid(&mut rng))).collect();

            let fr = frechet(&a, &b).unwrap();
            let hd = hausdorff(&a, &b).unwrap();
            assert!(
                fr >= hd - 1e-12,
                "frechet {fr} must dominate hausdorff {hd}"
            );

            let (dx, dy) = (13.25, -7.5);
            let ta: Vec<Point> = a.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect();
            let tb: Vec<Point> = b.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect();
            assert_eq!(frechet(&ta, &tb), Some(fr));
            assert_eq!(hausdorff(&ta, &tb), Some(hd));
        }
    }

    fn seg_map(pts_xy: &[(f64, f64)]) -> VectorMap {
        VectorMap::from_categories([Category::new(
            1,
            pts_xy.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        )])
    }

    #[test]
    fn rasterize_covers_inclusive_endpoints() {
        // A horizontal stroke-1 segment of length 10 covers 11 pixels: the
        // 10 steps plus the starting pixel.
        let v = seg_map(&[(3.5, 2.5), (13.5, 2.5)]);
        let r = rasterize(&v, 20, 6, 1);
        assert_eq!(r.count_foreground(), 11);
        let row = 6 - 1 - 2;
        for col in 3..=13 {
            assert!(r.get(row, col), "col {col}");
        }
    }

    #[test]
    fn rasterize_stroke_width_is_a_square_brush() {
        let v = seg_map(&[(3.5, 2.5), (13.5, 2.5)]);
        let r = rasterize(&v, 20, 6, 3);
        // 11 columns wide, 3 rows tall, one brush column each side.
        assert_eq!(r.count_foreground(), 13 * 3);
        let r2 = rasterize(&v, 20, 6, 2);
        assert_eq!(r2.count_foreground(), 12 * 2);
    }

    #[test]
    fn rasterize_clips_out_of_range_geometry() {
        let v = seg_map(&[(-5.5, 2.5), (4.5, 2.5)]);
        let r = rasterize(&v, 8, 6, 3);
        assert!(r.count_foreground() > 0);
        assert!(r.foreground_pixels().all(|(row, col)| row < 6 && col < 8));
    }

    #[test]
    fn perfect_candidate_scores_perfectly_per_tile() {
        // An L of two segments rendered once as reference and once through
        // patch evaluation; every evaluated tile must be a perfect match.
        let cats = [
            Category::new(1, pts(&[(4.5, 4.5), (44.5, 4.5)])),
            Category::new(2, pts(&[(4.5, 4.5), (4.5, 40.5)])),
        ];
        let v = VectorMap::from_categories(cats);
        let reference = rasterize(&v, 64, 48, 3);
        let report = patch_evaluate(&reference, &v, 16, 3);

        assert!(report.skipped_empty > 0, "blank corners must be skipped");
        assert!(!report.tiles.is_empty());
        for tile in &report.tiles {
            assert_eq!(tile.iou, 1.0);
            assert_eq!(tile.mse, 0.0);
            assert_eq!(tile.hausdorff, Some(0.0));
            if let Some(fr) = tile.frechet {
                assert_eq!(fr, 0.0);
            }
        }
        let iou_stats = report.iou_stats.unwrap();
        assert_eq!(iou_stats.mean, 1.0);
        assert_eq!(iou_stats.median, 1.0);
        assert_eq!(iou_stats.p90, 1.0);
        assert_eq!(report.hausdorff_skipped, 0);
    }

    #[test]
    fn patch_report_counts_one_sided_tiles() {
        // Reference has ink only in the top-left tile; candidate only in
        // the top-right one.
        let reference = {
            let mut r = BinaryRaster::new(32, 16, );
            for c in 2..10 {
                r.set(4, c, true);
            }
            r
        };
        let v = seg_map(&[(18.5, 11.5), (28.5, 11.5)]);
        let report = patch_evaluate(&reference, &v, 16, 1);
        assert_eq!(report.tiles.len(), 2);
        assert_eq!(report.hausdorff_skipped, 2);
        assert!(report.tiles.iter().all(|t| t.iou == 0.0));
        assert!(report.hausdorff_stats.is_none());
    }

    #[test]
    fn aggregates_use_nearest_rank() {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let agg = aggregate(&values).unwrap();
        assert_eq!(agg.mean, 5.5);
        assert_eq!(agg.median, 5.0);
        assert_eq!(agg.p90, 9.0);
        assert!(aggregate(&[]).is_none());
    }
}
