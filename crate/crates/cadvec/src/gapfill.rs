//! Closing small breaks in boundary strokes, plus the synthetic gap
//! generator used to measure how well the closing works.
//!
//! Scanned line work arrives with hairline interruptions where ink faded.
//! The repair here is deliberately classical: find stroke endpoints on a
//! thinned working copy, pair up mutually nearest endpoints whose stroke
//! directions continue each other, and draw a one-pixel digital line across
//! each accepted pair. The angle gate is what keeps parallel neighboring
//! boundaries from being welded together.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::raster::{connected_components, BinaryRaster};
use crate::skeleton::{neighbor_count, thin};

#[derive(Debug, Error)]
pub enum GapGenError {
    #[error("raster has {have} foreground pixels, need at least {needed}")]
    InsufficientForeground { needed: usize, have: usize },
    #[error("placed only {placed} of {requested} gaps; strokes too short or too crowded")]
    CouldNotPlace { placed: usize, requested: usize },
    #[error("gap length range {min}..={max} is empty or zero")]
    BadLengthRange { min: u32, max: u32 },
}

/// A free stroke end on the thinned working copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint {
    /// Pixel position as `(row, col)`.
    pub pos: (u32, u32),
    /// Unit vector `(d_col, d_row)` pointing outward, past the stroke end,
    /// estimated from up to `TRAIL_LEN` trailing skeleton pixels.
    pub stroke_dir: (f64, f64),
}

/// One drawn repair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapBridge {
    pub a: Endpoint,
    pub b: Endpoint,
    /// Euclidean pixel distance between the endpoints.
    pub length: f64,
}

/// How many trailing pixels feed the stroke-direction estimate.
const TRAIL_LEN: usize = 5;

const NEIGHBORS: [(i64, i64); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

fn fg_neighbors(r: &BinaryRaster, row: u32, col: u32) -> Vec<(u32, u32)> {
    NEIGHBORS
        .iter()
        .filter_map(|&(dr, dc)| {
            let nr = row as i64 + dr;
            let nc = col as i64 + dc;
            r.get_checked(nr, nc).then_some((nr as u32, nc as u32))
        })
        .collect()
}

/// Walks back from an endpoint along degree-2 pixels, up to `TRAIL_LEN`
/// steps, and returns the outward unit direction at the stroke end.
fn outward_direction(skel: &BinaryRaster, end: (u32, u32)) -> (f64, f64) {
    let mut prev = end;
    let mut cur = fg_neighbors(skel, end.0, end.1)[0];
    let mut steps = 1;
    while steps < TRAIL_LEN && neighbor_count(skel, cur.0, cur.1) == 2 {
        let next = fg_neighbors(skel, cur.0, cur.1)
            .into_iter()
            .find(|&q| q != prev)
            .expect("degree-2 pixel has a second neighbor");
        prev = cur;
        cur = next;
        steps += 1;
    }
    let d_col = end.1 as f64 - cur.1 as f64;
    let d_row = end.0 as f64 - cur.0 as f64;
    let norm = d_col.hypot(d_row);
    (d_col / norm, d_row / norm)
}

/// Finds free stroke ends. The input may be thick; a thinned working copy
/// is used internally, and reported positions live on that skeleton.
pub fn find_endpoints(r: &BinaryRaster) -> Vec<Endpoint> {
    let skel = thin(r);
    skel.foreground_pixels()
        .filter(|&(row, col)| neighbor_count(&skel, row, col) == 1)
        .map(|pos| Endpoint {
            pos,
            stroke_dir: outward_direction(&skel, pos),
        })
        .collect()
}

fn distance(a: (u32, u32), b: (u32, u32)) -> f64 {
    (a.0 as f64 - b.0 as f64).hypot(a.1 as f64 - b.1 as f64)
}

/// Draws an 8-connected digital line, endpoints inclusive.
fn draw_segment(r: &mut BinaryRaster, a: (u32, u32), b: (u32, u32)) {
    let (mut x0, mut y0) = (a.1 as i64, a.0 as i64);
    let (x1, y1) = (b.1 as i64, b.0 as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if y0 >= 0 && x0 >= 0 && (y0 as u32) < r.height() && (x0 as u32) < r.width() {
            r.set(y0 as u32, x0 as u32, true);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Bridges gaps between mutually nearest endpoint pairs.
///
/// A pair qualifies when the endpoints are within `max_gap` pixels and each
/// stroke direction deviates at most `max_angle_dev` degrees from the chord
/// connecting them (pointing toward the partner). Each endpoint joins at
/// most one bridge; candidates are ranked by distance with row-major
/// position as the tiebreak, so results are deterministic. The output
/// raster is the input plus the drawn lines, never less.
pub fn bridge_gaps(
    r: &BinaryRaster,
    max_gap: f64,
    max_angle_dev: f64,
) -> (BinaryRaster, Vec<GapBridge>) {
    let ends = find_endpoints(r);
    let cos_gate = max_angle_dev.to_radians().cos() - 1e-12;

    let admissible = |i: usize, j: usize| -> Option<f64> {
        let (a, b) = (&ends[i], &ends[j]);
        let d = distance(a.pos, b.pos);
        if d <= 0.0 || d > max_gap {
            return None;
        }
        let chord = (
            (b.pos.1 as f64 - a.pos.1 as f64) / d,
            (b.pos.0 as f64 - a.pos.0 as f64) / d,
        );
        let cos_a = a.stroke_dir.0 * chord.0 + a.stroke_dir.1 * chord.1;
        let cos_b = -(b.stroke_dir.0 * chord.0 + b.stroke_dir.1 * chord.1);
        (cos_a >= cos_gate && cos_b >= cos_gate).then_some(d)
    };

    // Nearest admissible partner per endpoint, distance then position order.
    let nearest: Vec<Option<usize>> = (0..ends.len())
        .map(|i| {
            (0..ends.len())
                .filter(|&j| j != i)
                .filter_map(|j| admissible(i, j).map(|d| (j, d)))
                .min_by(|(j1, d1), (j2, d2)| {
                    d1.partial_cmp(d2)
                        .expect("distances are finite")
                        .then(ends[*j1].pos.cmp(&ends[*j2].pos))
                })
                .map(|(j, _)| j)
        })
        .collect();

    let mut filled = r.clone();
    let mut bridges = Vec::new();
    for i in 0..ends.len() {
        if let Some(j) = nearest[i] {
            if j > i && nearest[j] == Some(i) {
                draw_segment(&mut filled, ends[i].pos, ends[j].pos);
                bridges.push(GapBridge {
                    a: ends[i],
                    b: ends[j],
                    length: distance(ends[i].pos, ends[j].pos),
                });
            }
        }
    }
    (filled, bridges)
}

/// Cuts `n_gaps` disjoint runs out of the strokes of `r`, producing a
/// corrupted copy plus the untouched ground truth.
///
/// Each gap erases a run of centerline pixels (length drawn uniformly from
/// `gap_len`) walked along a degree-2 stretch of the thinned stroke, plus a
/// perpendicular swath wide enough to sever thick strokes. Runs keep a
/// margin of intact centerline between themselves and any junction, so
/// every gap is an interior break. Identical inputs and seed give
/// bit-identical output.
pub fn generate_gaps(
    r: &BinaryRaster,
    n_gaps: usize,
    gap_len: (u32, u32),
    seed: u64,
) -> Result<(BinaryRaster, BinaryRaster), GapGenError> {
    let (len_min, len_max) = gap_len;
    if len_min == 0 || len_max < len_min {
        return Err(GapGenError::BadLengthRange {
            min: len_min,
            max: len_max,
        });
    }
    let fg = r.count_foreground();
    if fg < n_gaps {
        return Err(GapGenError::InsufficientForeground {
            needed: n_gaps,
            have: fg,
        });
    }

    let ground_truth = r.clone();
    let mut corrupted = r.clone();
    if n_gaps == 0 {
        return Ok((corrupted, ground_truth));
    }

    let skel = thin(r);
    let skel_px = skel.count_foreground().max(1);
    // Average stroke width decides how far the perpendicular swath reaches.
    let avg_width = ((fg + skel_px / 2) / skel_px).max(1) as i64;

    let path_pixels: Vec<(u32, u32)> = skel
        .foreground_pixels()
        .filter(|&(row, col)| neighbor_count(&skel, row, col) == 2)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reserved = BinaryRaster::new(r.width(), r.height());
    let mut erased = BinaryRaster::new(r.width(), r.height());
    let mut placed = 0usize;
    // Intact centerline kept between a gap and anything else. Long enough
    // that the stub left behind still carries a usable direction estimate.
    const MARGIN: usize = 4;

    let mut attempts = 0usize;
    let max_attempts = 200 * n_gaps + 200;
    while placed < n_gaps && attempts < max_attempts {
        attempts += 1;
        let start = path_pixels[rng.gen_range(0..path_pixels.len())];
        let want = rng.gen_range(len_min..=len_max) as usize;
        let go_first_neighbor = rng.gen_bool(0.5);

        // Walk margin + run + margin pixels of clean degree-2 chain.
        let total = want + 2 * MARGIN;
        let neighbors = fg_neighbors(&skel, start.0, start.1);
        let first = if go_first_neighbor {
            neighbors[0]
        } else {
            neighbors[neighbors.len() - 1]
        };
        let mut chain = vec![start];
        let mut prev = start;
        let mut cur = first;
        while chain.len() < total && neighbor_count(&skel, cur.0, cur.1) == 2 {
            chain.push(cur);
            let next = fg_neighbors(&skel, cur.0, cur.1)
                .into_iter()
                .find(|&q| q != prev)
                .expect("degree-2 pixel has a second neighbor");
            prev = cur;
            cur = next;
        }
        if chain.len() < total || chain.iter().any(|&(row, col)| reserved.get(row, col)) {
            continue;
        }

        // Reserve the whole stretch, erase only the middle run.
        for &(row, col) in &chain {
            reserved.set(row, col, true);
        }
        let run = &chain[MARGIN..MARGIN + want];
        for (k, &(row, col)) in run.iter().enumerate() {
            // Local along-stroke direction from the chain itself.
            let before = chain[MARGIN + k - 1];
            let after = chain[MARGIN + k + 1];
            let d_col = after.1 as f64 - before.1 as f64;
            let d_row = after.0 as f64 - before.0 as f64;
            let norm = d_col.hypot(d_row).max(1.0);
            let (n_col, n_row) = (-d_row / norm, d_col / norm);
            corrupted.set(row, col, false);
            erased.set(row, col, true);
            for t in 1..=avg_width {
                for sign in [-1.0, 1.0] {
                    let er = (row as f64 + sign * t as f64 * n_row).round() as i64;
                    let ec = (col as f64 + sign * t as f64 * n_col).round() as i64;
                    if er >= 0 && ec >= 0 && (er as u32) < r.height() && (ec as u32) < r.width() {
                        // Swath only cuts across the stroke, never along it:
                        // pixels on the reserved centerline stay.
                        if !reserved.get(er as u32, ec as u32) {
                            corrupted.set(er as u32, ec as u32, false);
                            erased.set(er as u32, ec as u32, true);
                        }
                    }
                }
            }
        }
        placed += 1;
    }

    if placed < n_gaps {
        return Err(GapGenError::CouldNotPlace {
            placed,
            requested: n_gaps,
        });
    }

    // The rounded swath rays can strand a crumb of a thick stroke inside a
    // cut. Anything tiny that now sits entirely against erased ground is
    // part of the gap, not of the map; sweep it out so every gap is clean.
    let debris_cap = (avg_width * avg_width) as usize;
    for comp in connected_components(&corrupted) {
        let is_debris = comp.area() <= debris_cap
            && comp.pixels.iter().all(|&(row, col)| {
                (-1..=1).any(|dr: i64| {
                    (-1..=1).any(|dc: i64| {
                        erased.get_checked(row as i64 + dr, col as i64 + dc)
                    })
                })
            });
        if is_debris {
            for &(row, col) in &comp.pixels {
                corrupted.set(row, col, false);
            }
        }
    }
    Ok((corrupted, ground_truth))
}
