//! Post-vectorization cleanup: join-error repair, staircase removal,
//! zero-length-segment removal, and category merging, plus the driver that
//! iterates them to a fixpoint.
//!
//! These four passes operate purely on the vector model. They are the
//! difference between raw traced line work and map-grade geometry: tracing
//! a thinned raster leaves pixel-scale zigzags, doubled junction clusters,
//! and arcs split at every former junction pixel.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::vecmodel::{Category, Point, PointKey, VectorMap};

/// Tuning for [`smooth`].
#[derive(Debug, Clone, Copy)]
pub struct SmoothParams {
    /// Arcs shorter than this qualify as join errors (crossbars between two
    /// junction clusters that should be a single crossing).
    pub len_threshold: f64,
    /// Hard cap on staircase sweeps, guarding against pathological inputs.
    pub max_passes: usize,
}

impl Default for SmoothParams {
    fn default() -> Self {
        SmoothParams {
            len_threshold: 3.0,
            max_passes: 16,
        }
    }
}

/// What [`smooth`] did, for logs and reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SmoothReport {
    pub joins_fixed: usize,
    pub staircases_removed: usize,
    pub zero_lengths_removed: usize,
    pub merges: usize,
    /// Staircase sweeps that changed at least one point.
    pub passes: usize,
}

impl SmoothReport {
    pub fn is_all_zero(&self) -> bool {
        *self == SmoothReport::default()
    }
}

/// Collapses spurious short arcs whose both endpoints are junctions.
///
/// A crossing drawn by hand and thinned often becomes two nearby junctions
/// connected by a stub. For every non-loop category shorter than
/// `len_threshold` whose endpoints each index three or more categories, all
/// other categories ending at either endpoint are re-terminated at the
/// stub's midpoint and the stub is dropped. Categories are examined in
/// ascending id order against a live endpoint index, so the result is
/// deterministic. Returns the map and the number of stubs removed.
pub fn solve_join_error(mut v: VectorMap, len_threshold: f64) -> (VectorMap, usize) {
    let mut index = v.junction_index();
    let mut fixed = 0usize;

    for id in v.ids() {
        let (left, right) = {
            let cat = v.get(id).expect("id from ids()");
            if cat.removed || cat.is_loop() || cat.arc_length() >= len_threshold {
                continue;
            }
            (cat.left(), cat.right())
        };
        let degree_left = index.get(&left.key()).map_or(0, Vec::len);
        let degree_right = index.get(&right.key()).map_or(0, Vec::len);
        if degree_left < 3 || degree_right < 3 {
            continue;
        }

        let mid = left.midpoint(right);
        let at_left = index.remove(&left.key()).unwrap_or_default();
        let at_right = index.remove(&right.key()).unwrap_or_default();
        // The midpoint can exactly coincide with an existing junction when
        // coordinates collide; merge into that bucket rather than clobber.
        let mut bucket = index.remove(&mid.key()).unwrap_or_default();

        let mut reterminate = |other: u32, old: Point| {
            if other == id {
                return;
            }
            let cat = v.get_mut(other).expect("indexed category exists");
            if cat.points[0].key() == old.key() {
                cat.points[0] = mid;
            }
            let last = cat.points.len() - 1;
            if cat.points[last].key() == old.key() {
                cat.points[last] = mid;
            }
            bucket.push(other);
        };
        for &other in &at_left {
            reterminate(other, left);
        }
        for &other in &at_right {
            reterminate(other, right);
        }
        bucket.sort_unstable();
        index.insert(mid.key(), bucket);

        v.get_mut(id).expect("id from ids()").removed = true;
        fixed += 1;
    }
    v.purge_removed();
    (v, fixed)
}

/// Sign of the turn at `b` when walking `a -> b -> c`: +1 counterclockwise,
/// -1 clockwise, 0 for collinear (or repeated) points.
fn turn_sign(a: Point, b: Point, c: Point) -> i32 {
    let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    if cross > 0.0 {
        1
    } else if cross < 0.0 {
        -1
    } else {
        0
    }
}

/// Removes pixel-grid zigzag from one polyline.
///
/// A sliding window of four consecutive points looks for an S-shaped double
/// turn (strictly opposite turn signs); the two middle points are then
/// replaced by their midpoint and the window advances past the new point.
/// Collinear turns (sign 0) never trigger. Endpoints are never touched, and
/// polylines with fewer than four points come back unchanged. Returns the
/// smoothed polyline and the number of replacements.
pub fn remove_staircase(cat: &Category) -> (Category, usize) {
    let pts = &cat.points;
    if pts.len() < 4 {
        return (cat.clone(), 0);
    }
    let mut out = Vec::with_capacity(pts.len());
    out.push(pts[0]);
    let mut replaced = 0usize;
    let mut i = 0usize;
    while i + 3 < pts.len() {
        let d1 = turn_sign(pts[i], pts[i + 1], pts[i + 2]);
        let d2 = turn_sign(pts[i + 1], pts[i + 2], pts[i + 3]);
        if d1 * d2 < 0 {
            out.push(pts[i + 1].midpoint(pts[i + 2]));
            replaced += 1;
            i += 2;
        } else {
            out.push(pts[i + 1]);
            i += 1;
        }
    }
    out.extend_from_slice(&pts[i + 1..]);
    let mut smoothed = Category::new(cat.id, out);
    smoothed.removed = cat.removed;
    (smoothed, replaced)
}

/// Drops zero-length segments: consecutive numerically equal points are
/// collapsed to the first occurrence. Categories left with fewer than two
/// points disappear from the map. Returns the map and the number of
/// segments dropped.
pub fn remove_zero_length(mut v: VectorMap) -> (VectorMap, usize) {
    let mut dropped = 0usize;
    let mut dead: Vec<u32> = Vec::new();
    for cat in v.iter_mut() {
        let mut kept: Vec<Point> = Vec::with_capacity(cat.points.len());
        for &p in &cat.points {
            match kept.last() {
                Some(last) if last.key() == p.key() => dropped += 1,
                _ => kept.push(p),
            }
        }
        if kept.len() < 2 {
            dead.push(cat.id);
        } else {
            cat.points = kept;
        }
    }
    for id in dead {
        v.remove(id);
    }
    (v, dropped)
}

/// Concatenates pairs of categories that meet end-to-end.
///
/// Every endpoint indexing exactly two distinct categories is a cosmetic
/// break, not a junction: the two polylines are joined into the one with
/// the smaller id, orienting each so the walk continues through the shared
/// point. Points are visited in ascending key order against a live index;
/// closed loops (the same id twice at one point) are left alone. One sweep
/// reaches the fixpoint because merging never changes the degree of any
/// other point. Returns the map and the number of categories absorbed.
pub fn merge_categories(mut v: VectorMap) -> (VectorMap, usize) {
    let mut index: BTreeMap<PointKey, Vec<u32>> = v.junction_index();
    let keys: Vec<PointKey> = index.keys().copied().collect();
    let mut merges = 0usize;

    for key in keys {
        let Some(bucket) = index.get(&key) else {
            continue;
        };
        if bucket.len() != 2 || bucket[0] == bucket[1] {
            continue;
        }
        let keep = bucket[0].min(bucket[1]);
        let absorb = bucket[0].max(bucket[1]);

        let mut absorbed = v.remove(absorb).expect("indexed category exists");
        let kept = v.get_mut(keep).expect("indexed category exists");

        // Orient so kept ends at the shared point and absorbed starts there.
        if kept.points[0].key() == key {
            kept.points.reverse();
        }
        if absorbed.points.last().expect("nonempty").key() == key {
            absorbed.points.reverse();
        }
        debug_assert_eq!(kept.points.last().expect("nonempty").key(), key);
        debug_assert_eq!(absorbed.points[0].key(), key);
        kept.points.extend_from_slice(&absorbed.points[1..]);

        // The shared point is now interior; the absorbed id's other
        // endpoint belongs to the surviving category.
        index.remove(&key);
        let other_end = absorbed.points.last().expect("nonempty").key();
        if let Some(other_bucket) = index.get_mut(&other_end) {
            for slot in other_bucket.iter_mut() {
                if *slot == absorb {
                    *slot = keep;
                }
            }
        }
        merges += 1;
    }
    (v, merges)
}

/// Full cleanup driver: repeats zero-length removal, merging, join repair,
/// and per-category staircase sweeps until one full round changes nothing
/// (or the staircase sweep cap is hit). On an already-clean map the report
/// is all zeros, and running [`smooth`] twice always zeros out the second
/// report.
pub fn smooth(v: VectorMap, params: &SmoothParams) -> (VectorMap, SmoothReport) {
    let mut v = v;
    let mut report = SmoothReport::default();

    loop {
        let (v1, zeros) = remove_zero_length(v);
        let (v2, merges) = merge_categories(v1);
        let (v3, joins) = solve_join_error(v2, params.len_threshold);
        v = v3;
        report.zero_lengths_removed += zeros;
        report.merges += merges;
        report.joins_fixed += joins;

        let mut stairs_this_round = 0usize;
        while report.passes < params.max_passes {
            let mut replaced = 0usize;
            let ids = v.ids();
            for id in ids {
                let cat = v.get(id).expect("id from ids()");
                let (smoothed, n) = remove_staircase(cat);
                if n > 0 {
                    *v.get_mut(id).expect("id from ids()") = smoothed;
                    replaced += n;
                }
            }
            if replaced == 0 {
                break;
            }
            report.passes += 1;
            stairs_this_round += replaced;
        }
        report.staircases_removed += stairs_this_round;

        if zeros + merges + joins + stairs_this_round == 0 || report.passes >= params.max_passes {
            return (v, report);
        }
    }
}
