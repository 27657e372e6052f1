//! Skeletonization of binary line work and classification of skeleton
//! pixels by neighbor degree.
//!
//! Thinning is the classic two-subiteration scheme of Zhang and Suen:
//! each pass flags border pixels whose 8-neighborhood satisfies the rule
//! set below and removes them all at once, so the result does not depend
//! on scan order. Iteration stops when a full pass deletes nothing.

use crate::raster::BinaryRaster;

/// Role of a skeleton pixel, by count of foreground 8-neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelClass {
    /// No neighbors; a stray dot.
    Isolated,
    /// Exactly one neighbor; a line terminates here.
    Endpoint,
    /// Two neighbors; interior of a line.
    Line,
    /// Three or more neighbors; lines meet here.
    Junction,
}

/// Neighbor offsets in the order P2..P9: N, NE, E, SE, S, SW, W, NW.
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

fn neighborhood(r: &BinaryRaster, row: u32, col: u32) -> [bool; 8] {
    let mut out = [false; 8];
    for (i, (dr, dc)) in NEIGHBORS.iter().enumerate() {
        out[i] = r.get_checked(row as i64 + dr, col as i64 + dc);
    }
    out
}

/// Number of foreground 8-neighbors (the B value in thinning literature).
pub fn neighbor_count(r: &BinaryRaster, row: u32, col: u32) -> u32 {
    neighborhood(r, row, col).iter().map(|&b| b as u32).sum()
}

/// Number of background-to-foreground transitions walking P2..P9 and back
/// to P2 (the A value).
fn transition_count(n: &[bool; 8]) -> u32 {
    let mut a = 0;
    for i in 0..8 {
        if !n[i] && n[(i + 1) % 8] {
            a += 1;
        }
    }
    a
}

/// Thins line work to a one-pixel-wide skeleton with Zhang-Suen iteration.
///
/// A pixel is deleted in subiteration one when all of these hold (with
/// P2..P9 the neighbors starting north, clockwise):
/// 2 <= B <= 6, A == 1, P2*P4*P6 == 0, P4*P6*P8 == 0;
/// subiteration two swaps the last two conditions for
/// P2*P4*P8 == 0, P2*P6*P8 == 0. The image border acts as background.
pub fn thin(input: &BinaryRaster) -> BinaryRaster {
    let mut img = input.clone();
    let width = img.width();

    // Only ever revisit surviving foreground pixels; deletions are
    // monotone so the worklist only shrinks.
    let mut alive: Vec<(u32, u32)> = img.foreground_pixels().collect();
    let mut to_delete: Vec<(u32, u32)> = Vec::new();
    let _ = width;

    loop {
        let mut changed = false;
        for sub in 0..2 {
            to_delete.clear();
            for &(row, col) in &alive {
                let n = neighborhood(&img, row, col);
                let b: u32 = n.iter().map(|&v| v as u32).sum();
                if !(2..=6).contains(&b) || transition_count(&n) != 1 {
                    continue;
                }
                let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
                let ok = if sub == 0 {
                    !(p2 && p4 && p6) && !(p4 && p6 && p8)
                } else {
                    !(p2 && p4 && p8) && !(p2 && p6 && p8)
                };
                if ok {
                    to_delete.push((row, col));
                }
            }
            if !to_delete.is_empty() {
                changed = true;
                for &(row, col) in &to_delete {
                    img.set(row, col, false);
                }
                alive.retain(|&(row, col)| img.get(row, col));
            }
        }
        if !changed {
            return img;
        }
    }
}

/// Classifies every foreground pixel of a skeleton, in row-major order.
pub fn classify_pixels(skel: &BinaryRaster) -> Vec<((u32, u32), PixelClass)> {
    skel.foreground_pixels()
        .map(|(row, col)| {
            let class = match neighbor_count(skel, row, col) {
                0 => PixelClass::Isolated,
                1 => PixelClass::Endpoint,
                2 => PixelClass::Line,
                _ => PixelClass::Junction,
            };
            ((row, col), class)
        })
        .collect()
}

/// Convenience filter: skeleton pixels with exactly one neighbor.
pub fn endpoints(skel: &BinaryRaster) -> Vec<(u32, u32)> {
    classify_pixels(skel)
        .into_iter()
        .filter(|&(_, c)| c == PixelClass::Endpoint)
        .map(|(p, _)| p)
        .collect()
}
